//! Model-based magnetic particle imaging at desk scale.
//!
//! The crate simulates field-free-point scans under the adiabatic Langevin
//! model and its exponential-memory (Debye) relaxation variant, and
//! reconstructs particle concentrations with a three-stage algorithm:
//!
//! 1. **relaxation adaption** — an O(L) recurrence converting measured
//!    relaxation-affected samples into the adiabatic samples they encode;
//! 2. **core stage** — variational reconstruction of the matrix-valued MPI
//!    core response on the FOV grid by conjugate gradient in the cosine
//!    transform domain with a bi-Laplacian penalty;
//! 3. **deconvolution stage** — multi-kernel half-quadratic splitting with a
//!    pluggable Gaussian denoiser and an adaptive multiplier schedule.
//!
//! Supporting modules cover the Langevin kernel family, grid containers,
//! trajectory and phantom generation, frequency-domain preprocessing,
//! PSNR/SSIM metrics and binary/CSV/PGM serialization.

pub mod cg;
pub mod conv;
pub mod core_stage;
pub mod dct;
pub mod deconv;
pub mod error;
pub mod fft;
pub mod grid;
pub mod interp;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod params;
pub mod phantom;
pub mod preprocess;
pub mod relaxation;
pub mod scan;
pub mod trajectory;

// re-exported so downstream crates can build SpectrumRecord values without
// pinning their own copy of the complex type
pub use num_complex;

pub use error::{Error, Result};
pub use grid::{trace_of, Fov, MatrixFieldGrid, ScalarGrid};
pub use params::PhysicalParams;
pub use scan::{add_noise, forward_debye, forward_langevin, ModelTag, ScanRecord};
pub use relaxation::{condition_number, relaxation_adaption, RelaxationParams};
pub use core_stage::{bilaplacian_apply, core_stage_solve, CoreSolveReport, CoreStageConfig};
pub use deconv::{
    hqs_deconvolve, noise_estimator, pad_and_cut, DeconvConfig, Denoiser, IdentityDenoiser,
    TikhonovDenoiser,
};
pub use metrics::{psnr, ssim};
