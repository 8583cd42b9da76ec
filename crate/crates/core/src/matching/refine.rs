use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::score::ScoreTarget;
use crate::geom::{wrap_delta_deg, SphericalViewpoint};
use crate::imgproc::foreground_mask;
use crate::orient::rotate_inplane;
use crate::viewgen::{GeneratorFailure, ViewDelta, ViewGenerator, ViewRequest};

/// Elevations are kept strictly inside the poles so the result stays a
/// valid viewpoint.
pub const MAX_REFINED_ELEVATION_DEG: f64 = 89.0;
/// Step of the first refinement iteration; halves every iteration.
pub const INITIAL_STEP_DEG: f64 = 10.0;

/// The image the generator conditions on and its canonical viewpoint.
#[derive(Debug, Clone, Copy)]
pub struct GenerationSource<'a> {
    pub image: &'a RgbImage,
    pub viewpoint: SphericalViewpoint,
    pub steps: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub viewpoint: SphericalViewpoint,
    /// Score of the final viewpoint; `None` when no iteration ran.
    pub score: Option<f64>,
    /// Viewpoint and score after each iteration.
    pub history: Vec<(SphericalViewpoint, f64)>,
}

/// Offsets of the 3x3x3 grid, center first, then lexicographic.
fn grid(step: f64) -> Vec<(f64, f64, f64)> {
    let mut out = vec![(0.0, 0.0, 0.0)];
    for da in [-step, 0.0, step] {
        for de in [-step, 0.0, step] {
            for dr in [-step, 0.0, step] {
                if (da, de, dr) != (0.0, 0.0, 0.0) {
                    out.push((da, de, dr));
                }
            }
        }
    }
    out
}

/// Local search around `coarse` over azimuth, elevation and inplane with a
/// step of `10 / 2^i` degrees at iteration `i`. The center is scored first and
/// only a strictly better neighbour moves the estimate.
///
/// Each iteration issues one generator request for the nine azimuth and
/// elevation offsets; the three inplane offsets are applied by rotating the
/// generated images.
pub fn refine_viewpoint(
    query: &ScoreTarget,
    coarse: &SphericalViewpoint,
    source: &GenerationSource<'_>,
    generator: &dyn ViewGenerator,
    iters: usize,
) -> Result<Refinement, GeneratorFailure> {
    let mut current = *coarse;
    let mut current_score = None;
    let mut history = Vec::with_capacity(iters);
    for i in 0..iters {
        let step = INITIAL_STEP_DEG / f64::from(1u32 << i.min(30));
        let offsets = grid(step);
        let mut positions: Vec<(f64, f64)> = Vec::with_capacity(9);
        for &(da, de, _) in &offsets {
            if !positions.contains(&(da, de)) {
                positions.push((da, de));
            }
        }
        let deltas: Vec<ViewDelta> = positions
            .iter()
            .map(|&(da, de)| {
                let e = (current.elevation_deg + de).clamp(-MAX_REFINED_ELEVATION_DEG, MAX_REFINED_ELEVATION_DEG);
                ViewDelta::new(
                    wrap_delta_deg(current.azimuth_deg + da - source.viewpoint.azimuth_deg),
                    e - source.viewpoint.elevation_deg,
                )
            })
            .collect();
        let request = ViewRequest::new(source.image.clone(), deltas, source.steps, source.seed)?;
        let images = generator.generate(&request)?;
        if images.len() != positions.len() {
            return Err(GeneratorFailure::CountMismatch { expected: positions.len(), got: images.len() });
        }

        let mut best = (current, f64::NEG_INFINITY);
        for &(da, de, dr) in &offsets {
            let p = positions.iter().position(|&q| q == (da, de)).expect("position listed");
            let candidate = SphericalViewpoint {
                elevation_deg: (current.elevation_deg + de).clamp(-MAX_REFINED_ELEVATION_DEG, MAX_REFINED_ELEVATION_DEG),
                ..SphericalViewpoint::new(
                    current.azimuth_deg + da,
                    0.0,
                    current.inplane_deg + dr,
                    current.distance,
                )
            };
            let rendered = rotate_inplane(&images[p], candidate.inplane_deg);
            let score = query.score(&ScoreTarget::new(&rendered, &foreground_mask(&rendered)));
            if score > best.1 {
                best = (candidate, score);
            }
        }
        // The center is re-scored every iteration, so its score is `best.1`
        // whenever nothing beats it.
        current = best.0;
        current_score = Some(best.1);
        history.push(best);
    }
    Ok(Refinement { viewpoint: current, score: current_score, history })
}
