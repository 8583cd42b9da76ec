use std::time::Instant;

use image::{GrayImage, RgbImage};
use log::info;
use serde::{Deserialize, Serialize};

use super::refine::{refine_viewpoint, GenerationSource, Refinement};
use super::score::{select_viewpoint, shrink_scales, MatchScore, ScoreTarget};
use super::MatchError;
use crate::geom::{
    compose_object_to_relative, distance_for_inscribed_sphere, lift_relative_to_input_cameras, viewpoint_to_pose,
    CameraIntrinsics, RigidTransform, SphericalViewpoint, SquareRoi, ViewFrame, VirtualView,
};
use crate::imgproc::mask_area;
use crate::orient::{estimate_orientation, OrientationConfig, OrientationHypothesis};
use crate::viewgen::{build_reference_set, canonical_reference_viewpoint, GeneratorProvider, DEFAULT_GENERATE_STEPS, DEFAULT_VIEW_COUNT};

/// Crops tried between scale 1 and `query_min_scale`.
const QUERY_SCALE_STEPS: usize = 9;

/// Scorer used to pick and refine the query viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Zero-mean NCC of 64x64 thumbnails over the union of masks.
    #[default]
    Ncc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Side of the object-centric virtual images.
    pub s_v: u32,
    pub n_views: usize,
    pub steps_orient: u32,
    pub steps_generate: u32,
    pub refine_iters: usize,
    /// Padding added on each side of the first view's ROI before it goes to
    /// the generator, as a fraction of the ROI side. Generated views of
    /// elongated objects leave the tight frame without it.
    pub generator_margin: f64,
    /// Smallest crop, relative to the second mask's box, that the scorer
    /// tries on the second view. Below 1 the selection tolerates masks that
    /// are looser than the object. 1 turns the search off.
    pub query_min_scale: f64,
    pub scorer: ScorerKind,
    pub seed: u64,
    pub orientation: OrientationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            s_v: 256,
            n_views: DEFAULT_VIEW_COUNT,
            steps_orient: 75,
            steps_generate: DEFAULT_GENERATE_STEPS,
            refine_iters: 3,
            generator_margin: 0.15,
            query_min_scale: 0.8,
            scorer: ScorerKind::Ncc,
            seed: 0,
            orientation: OrientationConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: &str| Err(MatchError::InvalidConfig(m.to_owned()));
        if self.s_v < crate::geom::MIN_VIRTUAL_SIZE {
            return bad("s_v below the minimum virtual size");
        }
        if self.n_views == 0 {
            return bad("n_views must be at least 1");
        }
        if self.steps_orient == 0 || self.steps_generate == 0 {
            return bad("step counts must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.generator_margin) {
            return bad("generator_margin must lie in [0, 1]");
        }
        if !(self.query_min_scale > 0.0 && self.query_min_scale <= 1.0) {
            return bad("query_min_scale must lie in (0, 1]");
        }
        if self.refine_iters > 16 {
            return bad("refine_iters above 16 has no effect beyond float resolution");
        }
        Ok(())
    }
}

/// Wall-clock time per pipeline stage, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub warp_ms: f64,
    pub orient_ms: f64,
    pub generate_ms: f64,
    pub select_ms: f64,
    pub refine_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub roi1: SquareRoi,
    pub roi2: SquareRoi,
    pub k_v1: CameraIntrinsics,
    pub k_v2: CameraIntrinsics,
    /// Intrinsics of the padded first view the generator sees.
    pub k_gen: CameraIntrinsics,
    pub orientation: OrientationHypothesis,
    /// Best hypothesis per inplane candidate.
    pub orientation_trace: Vec<OrientationHypothesis>,
    pub orientation_insufficient: bool,
    pub selection: MatchScore,
    pub selection_scores: Vec<f64>,
    pub coarse_viewpoint: SphericalViewpoint,
    pub refinement: Refinement,
    /// Object pose in the first virtual camera.
    pub object_pose1: RigidTransform,
    /// Object pose in the second virtual camera.
    pub object_pose2: RigidTransform,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    /// Camera 1 to camera 2; the translation is in object units.
    pub relative: RigidTransform,
    pub diagnostics: PairDiagnostics,
}

/// One input image with its object mask and intrinsics.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub image: &'a RgbImage,
    pub mask: &'a GrayImage,
    pub intrinsics: &'a CameraIntrinsics,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Relative pose of two views of one object.
///
/// Both images are warped to object-centric views around their mask's tight
/// square ROI; the first is also warped with [`PipelineConfig::generator_margin`]
/// of padding for the generator. That padded view is oriented and used to generate the reference set,
/// the second is matched against it and refined, and the two object poses
/// are composed and lifted back to the input cameras.
pub fn estimate_pair(
    first: PairInput<'_>,
    second: PairInput<'_>,
    provider: &dyn GeneratorProvider,
    cfg: &PipelineConfig,
) -> Result<PairEstimate, MatchError> {
    cfg.validate()?;
    let t_total = Instant::now();
    let mut timings = StageTimings::default();
    for (n, input) in [(1, &first), (2, &second)] {
        if input.image.dimensions() != input.mask.dimensions() {
            return Err(MatchError::InvalidInput(format!("image {n} and its mask differ in size")));
        }
        if input.image.dimensions() != (input.intrinsics.width, input.intrinsics.height) {
            return Err(MatchError::InvalidInput(format!("image {n} does not match its intrinsics")));
        }
        input.intrinsics.validate()?;
        if mask_area(input.mask) == 0 {
            return Err(MatchError::EmptyMask(n));
        }
    }

    let t = Instant::now();
    let v1 = VirtualView::from_mask(first.image, first.mask, first.intrinsics, cfg.s_v)?;
    let v2 = VirtualView::from_mask(second.image, second.mask, second.intrinsics, cfg.s_v)?;
    let g1 = VirtualView::with_margin(first.image, first.mask, first.intrinsics, v1.roi, cfg.s_v, cfg.generator_margin)?;
    let frame = ViewFrame { intrinsics: g1.intrinsics, distance: distance_for_inscribed_sphere(&v1.intrinsics) };
    timings.warp_ms = ms_since(t);

    let generator = provider.generator_for(&g1)?;

    let t = Instant::now();
    let mut orient_cfg = cfg.orientation.clone();
    orient_cfg.consistency.steps = cfg.steps_orient;
    orient_cfg.consistency.seed = cfg.seed;
    let orientation = estimate_orientation(&g1.image, &frame, generator.as_ref(), &orient_cfg)?;
    timings.orient_ms = ms_since(t);
    let hyp = orientation.hypothesis;
    info!("orientation: inplane {:.1} elevation {:.1}", hyp.inplane_deg, hyp.elevation_deg);

    let t = Instant::now();
    let set = build_reference_set(
        &orientation.rectified,
        &hyp,
        &frame,
        cfg.n_views,
        generator.as_ref(),
        cfg.steps_generate,
        cfg.seed,
    )?;
    timings.generate_ms = ms_since(t);

    let t = Instant::now();
    let query = ScoreTarget::with_shrink(&v2.image, &v2.mask, &shrink_scales(cfg.query_min_scale, QUERY_SCALE_STEPS));
    let selection = select_viewpoint(&query, &set).ok_or(MatchError::EmptyReferenceSet)?;
    let coarse = set.viewpoints[selection.best.index];
    timings.select_ms = ms_since(t);

    let t = Instant::now();
    let source = GenerationSource {
        image: &orientation.rectified,
        viewpoint: canonical_reference_viewpoint(&hyp, &frame),
        steps: cfg.steps_generate,
        seed: cfg.seed,
    };
    let refinement = refine_viewpoint(&query, &coarse, &source, generator.as_ref(), cfg.refine_iters)?;
    timings.refine_ms = ms_since(t);

    let vp2 = SphericalViewpoint { distance: distance_for_inscribed_sphere(&v2.intrinsics), ..refinement.viewpoint };
    let object_pose2 = viewpoint_to_pose(&vp2)?;
    let vp1 = SphericalViewpoint::new(0.0, hyp.elevation_deg, hyp.inplane_deg, distance_for_inscribed_sphere(&v1.intrinsics));
    let object_pose1 = viewpoint_to_pose(&vp1)?;
    let rel_v = compose_object_to_relative(&object_pose1, &object_pose2);
    let relative = lift_relative_to_input_cameras(&rel_v, &v1.rotation.rotation, &v2.rotation.rotation);
    timings.total_ms = ms_since(t_total);

    Ok(PairEstimate {
        relative,
        diagnostics: PairDiagnostics {
            roi1: v1.roi,
            roi2: v2.roi,
            k_v1: v1.intrinsics,
            k_v2: v2.intrinsics,
            k_gen: g1.intrinsics,
            orientation: hyp,
            orientation_trace: orientation.trace,
            orientation_insufficient: orientation.insufficient,
            selection: selection.best,
            selection_scores: selection.scores,
            coarse_viewpoint: coarse,
            refinement,
            object_pose1,
            object_pose2,
            timings,
        },
    })
}
