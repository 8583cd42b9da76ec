//! Query viewpoint selection, local refinement and the pair pipeline.

mod pipeline;
mod refine;
mod score;

pub use pipeline::{estimate_pair, PairDiagnostics, PairEstimate, PairInput, PipelineConfig, ScorerKind, StageTimings};
pub use refine::{refine_viewpoint, GenerationSource, Refinement, INITIAL_STEP_DEG, MAX_REFINED_ELEVATION_DEG};
pub use score::{argmax_first, score_pair, select_viewpoint, shrink_scales, MatchScore, ScoreTarget, Selection, SCORE_SIZE};

use thiserror::Error;

use crate::geom::GeomError;
use crate::orient::OrientError;
use crate::viewgen::{GeneratorFailure, ViewSetError};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("mask of image {0} is empty")]
    EmptyMask(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("reference view set is empty")]
    EmptyReferenceSet,
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Generator(#[from] GeneratorFailure),
    #[error("orientation search failed: {0}")]
    Orientation(#[from] OrientError),
    #[error("reference set: {0}")]
    ViewSet(#[from] ViewSetError),
}
