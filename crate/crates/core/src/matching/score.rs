use image::{GrayImage, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imgproc::{mask_bbox, mask_to_f32, ncc, resize_window, to_gray, GrayF32};
use crate::viewgen::GeneratedViewSet;

/// Side of the thumbnails compared by [`score_pair`].
pub const SCORE_SIZE: usize = 64;

/// Image and mask reduced to the scoring resolution.
///
/// Both are cropped to the square box around the mask first, so that
/// scoring compares object-centered thumbnails whatever the object's placement
/// and scale in the frame. An empty mask keeps the whole image.
///
/// A target built with [`ScoreTarget::with_shrink`] holds several crops of
/// decreasing size around the same center and scores with the best of them.
/// That absorbs a mask that is looser than the object.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTarget {
    crops: Vec<(GrayF32, GrayF32)>,
}

impl ScoreTarget {
    pub fn new(image: &RgbImage, mask: &GrayImage) -> Self {
        Self::with_shrink(image, mask, &[1.0])
    }

    /// One crop per entry of `scales`, each a fraction of the mask box side.
    /// Non-positive or non-finite scales are skipped; an empty list means `[1.0]`.
    pub fn with_shrink(image: &RgbImage, mask: &GrayImage, scales: &[f64]) -> Self {
        let (cx, cy, side) = match mask_bbox(mask) {
            Some((x0, y0, x1, y1)) => {
                let (w, h) = (f64::from(x1 - x0 + 1), f64::from(y1 - y0 + 1));
                (f64::from(x0) + w / 2.0, f64::from(y0) + h / 2.0, w.max(h))
            }
            None => {
                let side = f64::from(image.width().max(image.height()));
                (side / 2.0, side / 2.0, side)
            }
        };
        let gray = to_gray(image);
        let m = mask_to_f32(mask);
        let mut crops: Vec<_> = scales
            .iter()
            .filter(|s| s.is_finite() && **s > 0.0)
            .map(|s| {
                let side = side * s;
                let (x0, y0) = (cx - side / 2.0, cy - side / 2.0);
                (resize_window(&gray, x0, y0, side, SCORE_SIZE, 255.0), resize_window(&m, x0, y0, side, SCORE_SIZE, 0.0))
            })
            .collect();
        if crops.is_empty() {
            return Self::new(image, mask);
        }
        crops.shrink_to_fit();
        Self { crops }
    }

    /// Zero-mean NCC against `other` over the union of both masks, best over
    /// this target's crops. `other` contributes its first crop only.
    pub fn score(&self, other: &ScoreTarget) -> f64 {
        let (og, om) = &other.crops[0];
        self.crops
            .iter()
            .map(|(g, m)| {
                let union = GrayF32 { data: m.data.iter().zip(&om.data).map(|(a, b)| a.max(*b)).collect(), ..m.clone() };
                ncc(g, og, Some(&union))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evenly spaced crop scales from 1 down to `min_scale`, for
/// [`ScoreTarget::with_shrink`]. A `min_scale` of 1 or more gives `[1.0]`.
pub fn shrink_scales(min_scale: f64, steps: usize) -> Vec<f64> {
    if !(min_scale < 1.0) || steps < 2 {
        return vec![1.0];
    }
    (0..steps).map(|i| 1.0 - (1.0 - min_scale) * i as f64 / (steps - 1) as f64).collect()
}

/// NCC of two object-centered 64x64 thumbnails over the union of their masks, in
/// `[-1, 1]`. A constant image scores 0.
pub fn score_pair(query: &RgbImage, query_mask: &GrayImage, candidate: &RgbImage, candidate_mask: &GrayImage) -> f64 {
    ScoreTarget::new(query, query_mask).score(&ScoreTarget::new(candidate, candidate_mask))
}

/// A reference-set member and its score against the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best: MatchScore,
    /// Score of every member, in set order.
    pub scores: Vec<f64>,
}

/// Index of the highest scoring value, lowest index on ties.
pub fn argmax_first(scores: &[f64]) -> Option<MatchScore> {
    scores.iter().enumerate().fold(None, |best: Option<MatchScore>, (index, &score)| match best {
        Some(b) if !(score > b.score) => Some(b),
        _ => Some(MatchScore { index, score }),
    })
}

/// Scores the query against every member of `set` and picks the best one.
/// Returns `None` for an empty set.
pub fn select_viewpoint(query: &ScoreTarget, set: &GeneratedViewSet) -> Option<Selection> {
    let scores: Vec<f64> = set
        .images
        .par_iter()
        .zip(set.masks.par_iter())
        .map(|(img, mask)| query.score(&ScoreTarget::new(img, mask)))
        .collect();
    argmax_first(&scores).map(|best| Selection { best, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Luma, Rgb};

    fn textured(size: u32) -> (RgbImage, GrayImage) {
        let img = RgbImage::from_fn(size, size, |x, y| Rgb([(x * 3 + y) as u8, (y * 5) as u8, (x ^ y) as u8]));
        (img, GrayImage::from_pixel(size, size, Luma([255])))
    }

    #[test]
    fn identical_negated_constant() {
        let (img, mask) = textured(128);
        assert!((score_pair(&img, &mask, &img, &mask) - 1.0).abs() < 1e-6);
        let neg = RgbImage::from_fn(128, 128, |x, y| {
            let p = img.get_pixel(x, y);
            Rgb([255 - p[0], 255 - p[1], 255 - p[2]])
        });
        assert!((score_pair(&img, &mask, &neg, &mask) + 1.0).abs() < 1e-6);
        let flat = RgbImage::from_pixel(128, 128, Rgb([90, 90, 90]));
        assert_eq!(score_pair(&flat, &mask, &img, &mask), 0.0);
    }

    #[test]
    fn shrink_recovers_loose_mask() {
        let (img, _) = textured(128);
        let mut white = RgbImage::from_pixel(160, 160, Rgb([255, 255, 255]));
        image::imageops::replace(&mut white, &img, 16, 16);
        let tight = GrayImage::from_fn(160, 160, |x, y| Luma([if (16..144).contains(&x) && (16..144).contains(&y) { 255 } else { 0 }]));
        let loose = GrayImage::from_fn(160, 160, |x, y| Luma([if (4..156).contains(&x) && (4..156).contains(&y) { 255 } else { 0 }]));
        let reference = ScoreTarget::new(&white, &tight);
        let plain = ScoreTarget::new(&white, &loose).score(&reference);
        let shrunk = ScoreTarget::with_shrink(&white, &loose, &shrink_scales(0.8, 9)).score(&reference);
        assert!(shrunk > 0.95 && shrunk > plain + 0.1, "{plain} {shrunk}");
        assert_eq!(ScoreTarget::with_shrink(&white, &tight, &[]), reference);
    }

    #[test]
    fn shrink_scales_span() {
        assert_eq!(shrink_scales(1.0, 5), vec![1.0]);
        assert_eq!(shrink_scales(0.5, 1), vec![1.0]);
        let s = shrink_scales(0.8, 5);
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], 1.0);
        assert!((s[4] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax_first(&[0.1, 0.5, 0.5, 0.2]), Some(MatchScore { index: 1, score: 0.5 }));
        assert_eq!(argmax_first(&[]), None);
        assert_eq!(argmax_first(&[-0.3]).unwrap().index, 0);
    }

    #[test]
    fn argmax_invariant_under_increasing_map() {
        let s = [0.3, -0.2, 0.9, 0.1, 0.9];
        let mapped: Vec<f64> = s.iter().map(|v: &f64| (3.0 * v).exp() + 1.0).collect();
        assert_eq!(argmax_first(&s).unwrap().index, argmax_first(&mapped).unwrap().index);
    }
}
