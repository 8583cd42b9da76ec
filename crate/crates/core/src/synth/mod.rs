//! Procedural assets, a software rasterizer, synthetic datasets and the
//! re-rendering oracle backend.

mod asset;
mod dataset;
mod oracle;
mod render;

pub use asset::{make_asset, Asset, Triangle, MARKER_COLOR};
pub use dataset::{
    gen_dataset, synth_pair, DatasetConfig, DatasetManifest, ManifestEntry, PoseRecord, SyntheticPair, SyntheticView,
    ViewRecord, MANIFEST_FILE, MANIFEST_VERSION, manifest_base,
};
pub use oracle::{OracleGenerator, OracleProvider};
pub use render::render;

use std::path::PathBuf;

use thiserror::Error;

use crate::geom::GeomError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("camera center at distance {0} is inside the unit sphere")]
    CameraInsideSphere(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image failure on {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}
