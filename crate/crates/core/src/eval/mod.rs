//! Pose error metrics, mask dilation and the benchmark runner.

mod mask;
mod metrics;
mod runner;

pub use mask::dilate_mask;
pub use metrics::{accuracy_at, rotation_error_deg, translation_angle_deg};
pub use runner::{
    run_benchmark, Accuracy, Backend, BenchmarkOptions, BenchmarkReport, PairResult, PairSolver, PipelineSolver, SolvedPair,
    FAILURE_ERROR_DEG,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty list")]
    EmptyList,
    #[error("translation with zero norm")]
    ZeroTranslation,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Manifest(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}
