//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a mathematical precondition (NaN, negative scale, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent configuration (mismatched grids, bad parameter ranges, ...).
    #[error("config error: {0}")]
    Config(String),

    /// A solver failed in a way that indicates a numerical problem.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The problem is too ill-conditioned to be solved without regularization.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file contents (bad magic, truncated payload, unparsable text).
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
