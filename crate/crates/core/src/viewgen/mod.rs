//! Novel-view generator contract and the posed reference view set.
//!
//! A [`ViewGenerator`] receives an upright object-centric image together with
//! a list of `(Δazimuth, Δelevation)` offsets in the canonical object frame
//! and returns one image per offset. Three backends ship with the crate:
//!
//! * [`MockGenerator`]: a test card stamped with the requested deltas.
//! * [`crate::synth::OracleGenerator`]: exact re-rendering of a known asset.
//! * [`RemoteGenerator`]: HTTP client for a diffusion service speaking the
//!   `/v1` protocol (see [`protocol`]).

mod client;
mod mock;
pub mod protocol;
mod server;

pub use client::{resolve_endpoint, RemoteGenerator, ENDPOINT_ENV};
pub use mock::{decode_stamp, test_card, MockGenerator};
pub use server::{MockServer, MOCK_MODEL_ID};

use std::sync::Arc;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    viewpoint_to_pose, CameraIntrinsics, GeomError, RigidTransform, SphericalViewpoint, ViewFrame, VirtualView,
};
use crate::imgproc::foreground_mask;
use crate::orient::OrientationHypothesis;
use crate::viewsphere::{delta_views, sample_upper_hemisphere};

/// Default number of reference views.
pub const DEFAULT_VIEW_COUNT: usize = 128;
/// Default diffusion steps when generating the reference set.
pub const DEFAULT_GENERATE_STEPS: u32 = 50;

/// Failure of a generator backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorFailure {
    #[error("invalid generator request: {0}")]
    InvalidRequest(String),
    #[error("generator timed out: {0}")]
    Timeout(String),
    #[error("generator returned HTTP {status}: {message}")]
    HttpStatus { status: u16, message: String },
    #[error("generator transport error: {0}")]
    Transport(String),
    #[error("could not decode generator response: {0}")]
    Decode(String),
    #[error("generator returned {got} images for {expected} views")]
    CountMismatch { expected: usize, got: usize },
    #[error("generator backend error: {0}")]
    Backend(String),
}

/// One requested viewpoint change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewDelta {
    #[serde(rename = "d_azimuth_deg")]
    pub azimuth_deg: f64,
    #[serde(rename = "d_elevation_deg")]
    pub elevation_deg: f64,
}

impl ViewDelta {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self { azimuth_deg, elevation_deg }
    }
}

impl From<(f64, f64)> for ViewDelta {
    fn from((a, e): (f64, f64)) -> Self {
        Self::new(a, e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRequest {
    pub image: RgbImage,
    pub deltas: Vec<ViewDelta>,
    pub steps: u32,
    pub seed: u64,
}

impl ViewRequest {
    pub fn new(image: RgbImage, deltas: Vec<ViewDelta>, steps: u32, seed: u64) -> Result<Self, GeneratorFailure> {
        let req = Self { image, deltas, steps, seed };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), GeneratorFailure> {
        if self.deltas.is_empty() {
            return Err(GeneratorFailure::InvalidRequest("delta list is empty".into()));
        }
        if self.steps < 1 {
            return Err(GeneratorFailure::InvalidRequest("steps must be at least 1".into()));
        }
        if self.image.width() != self.image.height() || self.image.width() == 0 {
            return Err(GeneratorFailure::InvalidRequest(format!(
                "image must be square, got {}x{}",
                self.image.width(),
                self.image.height()
            )));
        }
        if self.deltas.iter().any(|d| !(d.azimuth_deg.is_finite() && d.elevation_deg.is_finite())) {
            return Err(GeneratorFailure::InvalidRequest("deltas must be finite".into()));
        }
        Ok(())
    }
}

/// Novel-view synthesis backend. Implementations must be safe to call from
/// several threads at once.
pub trait ViewGenerator: Send + Sync {
    /// One image per delta, in request order, at the input resolution.
    fn generate(&self, request: &ViewRequest) -> Result<Vec<RgbImage>, GeneratorFailure>;
}

impl<G: ViewGenerator + ?Sized> ViewGenerator for Arc<G> {
    fn generate(&self, request: &ViewRequest) -> Result<Vec<RgbImage>, GeneratorFailure> {
        (**self).generate(request)
    }
}

impl<G: ViewGenerator + ?Sized> ViewGenerator for &G {
    fn generate(&self, request: &ViewRequest) -> Result<Vec<RgbImage>, GeneratorFailure> {
        (**self).generate(request)
    }
}

/// Shared, thread-safe handle to a generator backend.
pub type SharedGenerator = Arc<dyn ViewGenerator>;

/// Supplies the generator used for one pair, given the first image's virtual
/// view. Learned backends ignore the view; the oracle needs it to know which
/// object and viewpoint it is standing in for.
pub trait GeneratorProvider: Send + Sync {
    fn generator_for(&self, first_view: &VirtualView) -> Result<SharedGenerator, GeneratorFailure>;
}

impl GeneratorProvider for SharedGenerator {
    fn generator_for(&self, _first_view: &VirtualView) -> Result<SharedGenerator, GeneratorFailure> {
        Ok(self.clone())
    }
}

/// Checks the per-request output contract shared by all backends.
pub(crate) fn check_output(request: &ViewRequest, images: &[RgbImage]) -> Result<(), GeneratorFailure> {
    if images.len() != request.deltas.len() {
        return Err(GeneratorFailure::CountMismatch { expected: request.deltas.len(), got: images.len() });
    }
    let size = request.image.dimensions();
    if let Some(bad) = images.iter().find(|i| i.dimensions() != size) {
        return Err(GeneratorFailure::Decode(format!(
            "generated image is {:?}, expected {:?}",
            bad.dimensions(),
            size
        )));
    }
    Ok(())
}

/// Posed, intrinsics-annotated views of the object in the canonical frame.
#[derive(Debug, Clone)]
pub struct GeneratedViewSet {
    pub images: Vec<RgbImage>,
    pub masks: Vec<GrayImage>,
    pub viewpoints: Vec<SphericalViewpoint>,
    /// Object-to-camera poses, `poses[i] = viewpoint_to_pose(viewpoints[i])`.
    pub poses: Vec<RigidTransform>,
    /// Shared by every member; equals the first input's virtual intrinsics.
    pub intrinsics: CameraIntrinsics,
    /// Index of the rectified input image within the set, if it was added.
    pub input_index: Option<usize>,
}

impl GeneratedViewSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Checks the structural invariants of the set.
    pub fn check(&self) -> Result<(), String> {
        let n = self.images.len();
        if self.masks.len() != n || self.viewpoints.len() != n || self.poses.len() != n {
            return Err("member lists differ in length".into());
        }
        for (i, (vp, pose)) in self.viewpoints.iter().zip(&self.poses).enumerate() {
            let expected = viewpoint_to_pose(vp).map_err(|e| format!("view {i}: {e}"))?;
            let diff = (expected.rotation - pose.rotation).abs().max() + (expected.translation - pose.translation).norm();
            if diff > 1e-9 {
                return Err(format!("view {i}: pose does not match its viewpoint"));
            }
            if self.images[i].dimensions() != (self.intrinsics.width, self.intrinsics.height) {
                return Err(format!("view {i}: image size does not match intrinsics"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ViewSetError {
    #[error(transparent)]
    Generator(#[from] GeneratorFailure),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("reference view count must be at least 1")]
    EmptyViewCount,
}

/// Canonical viewpoint of the rectified first image: azimuth 0 by
/// definition, the estimated elevation, zero roll, and the object distance
/// of `frame`.
pub fn canonical_reference_viewpoint(orientation: &OrientationHypothesis, frame: &ViewFrame) -> SphericalViewpoint {
    SphericalViewpoint::new(0.0, orientation.elevation_deg, 0.0, frame.distance)
}

/// Generates `n` hemisphere reference views from the rectified first image
/// and appends the input itself as a posed member.
pub fn build_reference_set(
    rectified: &RgbImage,
    orientation: &OrientationHypothesis,
    frame: &ViewFrame,
    n: usize,
    generator: &dyn ViewGenerator,
    steps: u32,
    seed: u64,
) -> Result<GeneratedViewSet, ViewSetError> {
    if n == 0 {
        return Err(ViewSetError::EmptyViewCount);
    }
    let reference = canonical_reference_viewpoint(orientation, frame);
    let targets = sample_upper_hemisphere(n, reference.distance, 0.0);
    let deltas = delta_views(&reference, &targets.viewpoints).into_iter().map(ViewDelta::from).collect();
    let request = ViewRequest::new(rectified.clone(), deltas, steps, seed)?;
    let mut images = generator.generate(&request)?;
    check_output(&request, &images)?;

    let mut viewpoints = targets.viewpoints;
    images.push(rectified.clone());
    viewpoints.push(reference);
    let poses = viewpoints.iter().map(viewpoint_to_pose).collect::<Result<Vec<_>, _>>()?;
    let masks = images.iter().map(foreground_mask).collect();
    Ok(GeneratedViewSet { images, masks, viewpoints, poses, intrinsics: frame.intrinsics, input_index: Some(n) })
}
