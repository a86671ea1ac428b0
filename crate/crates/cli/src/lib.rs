//! Library surface of the batch CLI: manifest parsing and the pipeline
//! runner, so integration tests can drive experiments in-process.

pub mod manifest;
pub mod pipeline;

pub use manifest::{DenoiserKind, ExperimentManifest};
pub use pipeline::{run_pipeline, PipelineOutcome, RunRow, SummaryRow};
