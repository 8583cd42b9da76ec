//! Inplane rotation and elevation of the first object-centric image.
//!
//! Both angles are found by a three-stage coarse-to-fine enumeration. Each
//! candidate is scored by generating a few nearby views from the (rotated)
//! image, matching them against it and counting correspondences that
//! triangulate consistently under the camera poses the candidate implies.

mod matcher;
mod triangulate;

pub use matcher::{match_patches, Correspondence, MatcherConfig};
pub use triangulate::{extrinsic_matrix, triangulate_and_reproject, triangulate_dlt};

use std::collections::HashMap;

use image::RgbImage;
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{look_at_pose, CameraIntrinsics, SphericalViewpoint, ViewFrame, BACKGROUND};
use crate::imgproc::{foreground_mask, mask_to_f32, sample_rgb, to_gray};
use crate::viewgen::{GeneratorFailure, ViewDelta, ViewGenerator, ViewRequest};

#[derive(Debug, Error)]
pub enum OrientError {
    #[error(transparent)]
    Generator(#[from] GeneratorFailure),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Estimated orientation of the first image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationHypothesis {
    /// Roll of the image about its optical axis; the image is rectified by
    /// rotating it by `-inplane_deg`.
    pub inplane_deg: f64,
    pub elevation_deg: f64,
    pub score: f64,
}

/// One stage of the enumeration: offsets around the current best angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStage {
    pub offsets: Vec<f64>,
    pub interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSchedule {
    pub stages: Vec<SearchStage>,
}

impl Default for SearchSchedule {
    /// `{-30, -10, 10, 30}`, then `x + {-14, -7, 0, 7, 14}`, then
    /// `y + {-4, -2, 0, 2, 4}`.
    fn default() -> Self {
        Self {
            stages: vec![
                SearchStage { offsets: vec![-30.0, -10.0, 10.0, 30.0], interval: 20.0 },
                SearchStage { offsets: vec![-14.0, -7.0, 0.0, 7.0, 14.0], interval: 7.0 },
                SearchStage { offsets: vec![-4.0, -2.0, 0.0, 2.0, 4.0], interval: 2.0 },
            ],
        }
    }
}

/// Result of a schedule run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub best: f64,
    pub score: f64,
    /// Distinct angles scored.
    pub evaluations: usize,
}

impl SearchSchedule {
    /// A single stage holding one candidate.
    pub fn single(angle: f64) -> Self {
        Self { stages: vec![SearchStage { offsets: vec![angle], interval: 1.0 }] }
    }

    /// Multiplies every offset and interval by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            stages: self
                .stages
                .iter()
                .map(|s| SearchStage { offsets: s.offsets.iter().map(|o| o * factor).collect(), interval: s.interval * factor })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.stages.is_empty() || self.stages.iter().any(|s| s.offsets.is_empty()) {
            return Err("schedule needs at least one non-empty stage".into());
        }
        if self.stages.windows(2).any(|w| !(w[1].interval < w[0].interval)) {
            return Err("stage intervals must strictly decrease".into());
        }
        if self.stages.iter().flat_map(|s| &s.offsets).any(|o| !o.is_finite()) {
            return Err("offsets must be finite".into());
        }
        Ok(())
    }

    /// Runs the stages around `center`, clamping candidates to `[lo, hi]`.
    /// Each distinct angle is scored once; the first-enumerated angle wins ties.
    pub fn search<F: FnMut(f64) -> f64>(&self, center: f64, lo: f64, hi: f64, mut score_fn: F) -> SearchOutcome {
        let mut cache: HashMap<u64, f64> = HashMap::new();
        let mut best: Option<(f64, f64)> = None;
        let mut anchor = center;
        for stage in &self.stages {
            for off in &stage.offsets {
                let angle = (anchor + off).clamp(lo, hi);
                let key = angle.to_bits();
                let s = match cache.get(&key) {
                    Some(&s) => s,
                    None => {
                        let s = score_fn(angle);
                        cache.insert(key, s);
                        s
                    }
                };
                if best.map_or(true, |(_, bs)| s > bs) {
                    best = Some((angle, s));
                }
            }
            anchor = best.map_or(anchor, |b| b.0);
        }
        let (best, score) = best.unwrap_or((center.clamp(lo, hi), f64::NEG_INFINITY));
        SearchOutcome { best, score, evaluations: cache.len() }
    }
}

/// Default schedule over `[-max_abs_deg, max_abs_deg]` centered at 0.
pub fn coarse_to_fine_angles<F: FnMut(f64) -> f64>(score_fn: F, max_abs_deg: f64) -> f64 {
    SearchSchedule::default().search(0.0, -max_abs_deg, max_abs_deg, score_fn).best
}

/// Rotates a square image about its center so that content at offset `p`
/// moves to `Rz(angle) p` in pixel axes. Bilinear, white fill.
pub fn rotate_inplane(image: &RgbImage, angle_deg: f64) -> RgbImage {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = (f64::from(image.width()) / 2.0, f64::from(image.height()) / 2.0);
    RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let (dx, dy) = (f64::from(x) + 0.5 - cx, f64::from(y) + 0.5 - cy);
        sample_rgb(image, cx + c * dx + s * dy, cy - s * dx + c * dy).unwrap_or(BACKGROUND)
    })
}

/// Settings of the triangulation-consistency score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    /// Nearby views sit at `(+-delta, +-delta)` in azimuth and elevation.
    pub nearby_delta_deg: f64,
    pub matcher: MatcherConfig,
    /// Inlier reprojection threshold for a 256 px image; scales with size.
    pub inlier_px_at_256: f64,
    pub min_matches: usize,
    pub steps: u32,
    pub seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self { nearby_delta_deg: 10.0, matcher: MatcherConfig::default(), inlier_px_at_256: 1.0, min_matches: 8, steps: 75, seed: 0 }
    }
}

impl ConsistencyConfig {
    pub fn nearby_deltas(&self) -> Vec<(f64, f64)> {
        let d = self.nearby_delta_deg;
        vec![(d, d), (-d, d), (-d, -d), (d, -d)]
    }

    pub fn inlier_threshold(&self, size: u32) -> f64 {
        self.inlier_px_at_256 * f64::from(size) / 256.0
    }
}

/// Correspondences between an image and its generated nearby views, ready
/// to be scored under any elevation.
#[derive(Debug, Clone)]
pub struct NearbyEvidence {
    intrinsics: CameraIntrinsics,
    distance: f64,
    threshold: f64,
    min_matches: usize,
    deltas: Vec<(f64, f64)>,
    matches: Vec<Vec<Correspondence>>,
}

/// Score of one elevation under some evidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElevationScore {
    /// Truncated-quadratic inlier count: each correspondence whose
    /// reprojection error `e` is below the threshold `τ` adds `1 - (e/τ)^2`.
    /// Zero when correspondences are insufficient.
    pub score: f64,
    /// Plain count of correspondences below the threshold.
    pub inliers: usize,
}

impl NearbyEvidence {
    /// Generates the nearby views of `image` and matches `image` against each.
    pub fn gather(
        image: &RgbImage,
        frame: &ViewFrame,
        generator: &dyn ViewGenerator,
        cfg: &ConsistencyConfig,
    ) -> Result<Self, OrientError> {
        let k_v = &frame.intrinsics;
        if image.width() != image.height() || (image.width(), image.height()) != (k_v.width, k_v.height) {
            return Err(OrientError::InvalidInput(format!(
                "image {:?} does not match square intrinsics {}x{}",
                image.dimensions(),
                k_v.width,
                k_v.height
            )));
        }
        let deltas = cfg.nearby_deltas();
        let request = ViewRequest::new(image.clone(), deltas.iter().copied().map(ViewDelta::from).collect(), cfg.steps, cfg.seed)?;
        let views = generator.generate(&request)?;
        let source = to_gray(image);
        let source_mask = mask_to_f32(&foreground_mask(image));
        let matches = views.iter().map(|v| match_patches(&source, &source_mask, &to_gray(v), &cfg.matcher)).collect();
        Ok(Self {
            intrinsics: *k_v,
            distance: frame.distance,
            threshold: cfg.inlier_threshold(k_v.width),
            min_matches: cfg.min_matches,
            deltas,
            matches,
        })
    }

    pub fn match_count(&self) -> usize {
        self.matches.iter().map(Vec::len).sum()
    }

    pub fn is_sufficient(&self) -> bool {
        self.match_count() >= self.min_matches
    }

    pub fn matches(&self) -> &[Vec<Correspondence>] {
        &self.matches
    }

    /// Triangulates every correspondence with the poses implied by
    /// `elevation_deg` and counts the consistent ones.
    pub fn score(&self, elevation_deg: f64) -> ElevationScore {
        if !self.is_sufficient() {
            return ElevationScore { score: 0.0, inliers: 0 };
        }
        let input_pose = look_at_pose(&SphericalViewpoint::new(0.0, elevation_deg, 0.0, self.distance));
        let (mut inliers, mut score) = (0usize, 0.0);
        for (&(da, de), matches) in self.deltas.iter().zip(&self.matches) {
            let vp = SphericalViewpoint { elevation_deg: elevation_deg + de, ..SphericalViewpoint::new(da, 0.0, 0.0, self.distance) };
            let pose = look_at_pose(&vp);
            for c in matches {
                if let Some((_, err)) = triangulate_and_reproject(&self.intrinsics, &input_pose, &pose, &c.a, &c.b) {
                    if err < self.threshold {
                        inliers += 1;
                        score += 1.0 - (err / self.threshold).powi(2);
                    }
                }
            }
        }
        ElevationScore { score, inliers }
    }
}

/// Best elevation among `candidates` for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyResult {
    pub elevation_deg: f64,
    pub score: f64,
    pub inliers: usize,
    pub matches: usize,
    /// Fewer correspondences than required; the score is 0.
    pub insufficient: bool,
}

/// Scores each elevation candidate by triangulation consistency and keeps
/// the best one (first candidate on ties).
pub fn consistency_score(
    image: &RgbImage,
    frame: &ViewFrame,
    elevation_candidates: &[f64],
    generator: &dyn ViewGenerator,
    cfg: &ConsistencyConfig,
) -> Result<ConsistencyResult, OrientError> {
    if elevation_candidates.is_empty() {
        return Err(OrientError::InvalidInput("no elevation candidates".into()));
    }
    let evidence = NearbyEvidence::gather(image, frame, generator, cfg)?;
    if !evidence.is_sufficient() {
        warn!("only {} correspondences among nearby views", evidence.match_count());
    }
    let mut best = ConsistencyResult {
        elevation_deg: elevation_candidates[0],
        score: f64::NEG_INFINITY,
        inliers: 0,
        matches: evidence.match_count(),
        insufficient: !evidence.is_sufficient(),
    };
    for &e in elevation_candidates {
        let s = evidence.score(e);
        if s.score > best.score {
            best = ConsistencyResult { elevation_deg: e, score: s.score, inliers: s.inliers, ..best };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrientationConfig {
    pub inplane_schedule: SearchSchedule,
    /// Inplane schedule scaled to the elevation half-range.
    pub elevation_schedule: SearchSchedule,
    pub max_inplane_deg: f64,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub consistency: ConsistencyConfig,
}

impl Default for OrientationConfig {
    fn default() -> Self {
        Self {
            inplane_schedule: SearchSchedule::default(),
            elevation_schedule: SearchSchedule::default(),
            max_inplane_deg: 45.0,
            min_elevation_deg: -10.0,
            max_elevation_deg: 80.0,
            consistency: ConsistencyConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrientationEstimate {
    pub hypothesis: OrientationHypothesis,
    /// Input rotated by `-inplane_deg`.
    pub rectified: RgbImage,
    /// Best hypothesis per inplane candidate, in evaluation order.
    pub trace: Vec<OrientationHypothesis>,
    /// Some inplane candidate lacked correspondences.
    pub insufficient: bool,
}

/// Joint inplane and elevation search on the first object-centric image.
pub fn estimate_orientation(
    image: &RgbImage,
    frame: &ViewFrame,
    generator: &dyn ViewGenerator,
    cfg: &OrientationConfig,
) -> Result<OrientationEstimate, OrientError> {
    cfg.inplane_schedule.validate().map_err(OrientError::InvalidInput)?;
    cfg.elevation_schedule.validate().map_err(OrientError::InvalidInput)?;
    if !(cfg.min_elevation_deg < cfg.max_elevation_deg && cfg.max_elevation_deg < 90.0 && cfg.min_elevation_deg > -90.0) {
        return Err(OrientError::InvalidInput("elevation range must lie inside (-90, 90)".into()));
    }
    let el_center = 0.5 * (cfg.min_elevation_deg + cfg.max_elevation_deg);
    let mut trace = Vec::new();
    let mut failure: Option<OrientError> = None;
    let mut insufficient = false;
    let outcome = cfg.inplane_schedule.search(0.0, -cfg.max_inplane_deg, cfg.max_inplane_deg, |a| {
        if failure.is_some() {
            return f64::NEG_INFINITY;
        }
        let rotated = rotate_inplane(image, -a);
        let evidence = match NearbyEvidence::gather(&rotated, frame, generator, &cfg.consistency) {
            Ok(e) => e,
            Err(e) => {
                failure = Some(e);
                return f64::NEG_INFINITY;
            }
        };
        if !evidence.is_sufficient() {
            warn!("inplane {a:.1}: only {} correspondences", evidence.match_count());
            insufficient = true;
        }
        let el = cfg
            .elevation_schedule
            .search(el_center, cfg.min_elevation_deg, cfg.max_elevation_deg, |e| evidence.score(e).score);
        debug!("inplane {a:.1}: elevation {:.1} score {:.3} ({} matches)", el.best, el.score, evidence.match_count());
        trace.push(OrientationHypothesis { inplane_deg: a, elevation_deg: el.best, score: el.score });
        el.score
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let hypothesis = trace
        .iter()
        .copied()
        .find(|h| h.inplane_deg == outcome.best)
        .unwrap_or(OrientationHypothesis { inplane_deg: outcome.best, elevation_deg: el_center, score: 0.0 });
    Ok(OrientationEstimate { hypothesis, rectified: rotate_inplane(image, -hypothesis.inplane_deg), trace, insufficient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(coarse_to_fine_angles(|a| -(a - 10.0).abs(), 45.0), 10.0);
        assert!((coarse_to_fine_angles(|a| -(a - 12.0).abs(), 45.0) - 12.0).abs() <= 2.0);
        assert_eq!(coarse_to_fine_angles(|_| 1.0, 45.0), -30.0);
    }

    #[test]
    fn schedule_budget_and_range() {
        let mut seen = Vec::new();
        let out = SearchSchedule::default().search(0.0, -45.0, 45.0, |a| {
            seen.push(a);
            -(a - 44.0).abs()
        });
        assert!(seen.len() <= 14);
        assert!(seen.iter().all(|a| a.abs() <= 45.0));
        assert_eq!(out.evaluations, seen.len());
        assert!((out.best - 44.0).abs() <= 2.0);
    }

    #[test]
    fn single_stage_single_candidate() {
        let out = SearchSchedule::single(7.0).search(0.0, -45.0, 45.0, |a| a * 2.0);
        assert_eq!((out.best, out.score, out.evaluations), (7.0, 14.0, 1));
    }

    #[test]
    fn schedule_validation() {
        assert!(SearchSchedule::default().validate().is_ok());
        let bad = SearchSchedule { stages: vec![SearchStage { offsets: vec![0.0], interval: 2.0 }, SearchStage { offsets: vec![0.0], interval: 2.0 }] };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn unimodal_peak_found(p in -45.0f64..45.0, width in 20.0f64..200.0) {
            let found = coarse_to_fine_angles(|a| -((a - p) / width).powi(2), 45.0);
            prop_assert!((found - p).abs() <= 2.0, "{} vs {}", found, p);
        }
    }

    fn pattern(size: u32) -> RgbImage {
        RgbImage::from_fn(size, size, |x, y| Rgb([(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x * y) % 200) as u8]))
    }

    #[test]
    fn rotate_zero_and_quarter() {
        let img = pattern(32);
        assert_eq!(rotate_inplane(&img, 0.0), img);
        let r = rotate_inplane(&img, 90.0);
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(r.get_pixel(x, y), img.get_pixel(y, 31 - x));
            }
        }
    }

    #[test]
    fn rotate_round_trip_interior() {
        let img = RgbImage::from_fn(128, 128, |x, y| {
            let v = 128.0 + 90.0 * ((x as f64) * 0.12).sin() * ((y as f64) * 0.09).cos();
            Rgb([v as u8, (255.0 - v) as u8, 100])
        });
        let back = rotate_inplane(&rotate_inplane(&img, 23.0), -23.0);
        let (mut sum, mut n) = (0.0, 0.0);
        for y in 13..115 {
            for x in 13..115 {
                for ch in 0..3 {
                    sum += (f64::from(back.get_pixel(x, y)[ch]) - f64::from(img.get_pixel(x, y)[ch])).abs();
                    n += 1.0;
                }
            }
        }
        assert!(sum / n < 2.0, "{}", sum / n);
    }

    struct Blank;
    impl ViewGenerator for Blank {
        fn generate(&self, r: &ViewRequest) -> Result<Vec<RgbImage>, GeneratorFailure> {
            Ok(r.deltas.iter().map(|_| RgbImage::from_pixel(r.image.width(), r.image.height(), Rgb([120, 120, 120]))).collect())
        }
    }

    #[test]
    fn blank_object_is_insufficient() {
        let img = RgbImage::from_fn(64, 64, |x, y| {
            if (x as i32 - 32).pow(2) + (y as i32 - 32).pow(2) < 400 { Rgb([120, 120, 120]) } else { Rgb([255, 255, 255]) }
        });
        let k = ViewFrame::inscribed(&CameraIntrinsics::square(80.0, 64).unwrap());
        let r = consistency_score(&img, &k, &[0.0, 30.0], &Blank, &ConsistencyConfig::default()).unwrap();
        assert!(r.insufficient);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn size_mismatch_rejected() {
        let k = ViewFrame::inscribed(&CameraIntrinsics::square(80.0, 64).unwrap());
        assert!(matches!(
            consistency_score(&pattern(32), &k, &[0.0], &Blank, &ConsistencyConfig::default()),
            Err(OrientError::InvalidInput(_))
        ));
    }
}
