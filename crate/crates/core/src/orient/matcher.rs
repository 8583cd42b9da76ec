use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::imgproc::GrayF32;

/// Grid patch matcher settings. Sizes are in pixels of the full-resolution
/// image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// Patch centers per image side.
    pub grid: usize,
    /// Odd patch side.
    pub patch: usize,
    /// Search radius around the source location.
    pub radius: usize,
    pub min_ncc: f64,
    /// Maximum distance between a source point and its backward match.
    pub fb_tolerance: f64,
    /// Patches flatter than this standard deviation are skipped.
    pub min_std: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self { grid: 16, patch: 15, radius: 24, min_ncc: 0.8, fb_tolerance: 1.5, min_std: 3.0 }
    }
}

/// A point pair in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
    pub ncc: f64,
}

/// Image plus summed tables for O(1) window means and variances.
struct Indexed<'a> {
    img: &'a GrayF32,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl<'a> Indexed<'a> {
    fn new(img: &'a GrayF32) -> Self {
        let (w, h) = (img.width + 1, img.height + 1);
        let mut sum = vec![0.0; w * h];
        let mut sq = vec![0.0; w * h];
        for y in 0..img.height {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..img.width {
                let v = f64::from(img.get(x, y));
                rs += v;
                rq += v * v;
                sum[(y + 1) * w + x + 1] = sum[y * w + x + 1] + rs;
                sq[(y + 1) * w + x + 1] = sq[y * w + x + 1] + rq;
            }
        }
        Self { img, sum, sq }
    }

    /// Mean and standard deviation of the `(2r+1)^2` window centered at `(cx, cy)`.
    fn stats(&self, cx: usize, cy: usize, r: usize) -> (f64, f64) {
        let w = self.img.width + 1;
        let (x0, y0, x1, y1) = (cx - r, cy - r, cx + r + 1, cy + r + 1);
        let n = ((2 * r + 1) * (2 * r + 1)) as f64;
        let s = self.sum[y1 * w + x1] - self.sum[y0 * w + x1] - self.sum[y1 * w + x0] + self.sum[y0 * w + x0];
        let q = self.sq[y1 * w + x1] - self.sq[y0 * w + x1] - self.sq[y1 * w + x0] + self.sq[y0 * w + x0];
        let mean = s / n;
        (mean, (q / n - mean * mean).max(0.0).sqrt())
    }

    fn fits(&self, cx: i64, cy: i64, r: usize) -> bool {
        let r = r as i64;
        cx - r >= 0 && cy - r >= 0 && cx + r < self.img.width as i64 && cy + r < self.img.height as i64
    }
}

/// Zero-mean template extracted from one image.
struct Template {
    values: Vec<f64>,
    norm: f64,
    r: usize,
}

impl Template {
    fn new(src: &Indexed<'_>, cx: usize, cy: usize, r: usize) -> Self {
        let (mean, std) = src.stats(cx, cy, r);
        let mut values = Vec::with_capacity((2 * r + 1) * (2 * r + 1));
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                values.push(f64::from(src.img.get(x, y)) - mean);
            }
        }
        let n = values.len() as f64;
        Self { values, norm: std * n.sqrt(), r }
    }

    fn ncc_at(&self, dst: &Indexed<'_>, cx: usize, cy: usize) -> f64 {
        let r = self.r;
        let (_, std) = dst.stats(cx, cy, r);
        let denom = self.norm * std * (self.values.len() as f64).sqrt();
        if denom < 1e-9 {
            return -1.0;
        }
        let side = 2 * r + 1;
        let mut acc = 0.0;
        for (j, y) in (cy - r..=cy + r).enumerate() {
            let row = &dst.img.data[y * dst.img.width + cx - r..y * dst.img.width + cx + r + 1];
            let t = &self.values[j * side..(j + 1) * side];
            acc += row.iter().zip(t).map(|(&v, &tv)| f64::from(v) * tv).sum::<f64>();
        }
        acc / denom
    }

    /// Best integer location within `radius` of `(cx, cy)` in `dst`, with
    /// the NCC values of its 4-neighbours for subpixel fitting.
    fn search(&self, dst: &Indexed<'_>, cx: i64, cy: i64, radius: i64) -> Option<Peak> {
        let mut best: Option<(i64, i64, f64)> = None;
        for y in cy - radius..=cy + radius {
            for x in cx - radius..=cx + radius {
                if !dst.fits(x, y, self.r) {
                    continue;
                }
                let s = self.ncc_at(dst, x as usize, y as usize);
                if best.map_or(true, |b| s > b.2) {
                    best = Some((x, y, s));
                }
            }
        }
        let (x, y, s) = best?;
        let around = |dx: i64, dy: i64| {
            let (nx, ny) = (x + dx, y + dy);
            dst.fits(nx, ny, self.r).then(|| self.ncc_at(dst, nx as usize, ny as usize))
        };
        let sub = |minus: Option<f64>, plus: Option<f64>| match (minus, plus) {
            (Some(m), Some(p)) => {
                let curvature = m - 2.0 * s + p;
                if curvature < 0.0 {
                    (0.5 * (m - p) / curvature).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        Some(Peak {
            x,
            y,
            score: s,
            sub_x: sub(around(-1, 0), around(1, 0)),
            sub_y: sub(around(0, -1), around(0, 1)),
        })
    }
}

struct Peak {
    x: i64,
    y: i64,
    score: f64,
    sub_x: f64,
    sub_y: f64,
}

/// Full and half resolution views of one image.
struct Pyramid<'a> {
    full: Indexed<'a>,
    half: Indexed<'a>,
}

/// Two-level search from full-resolution pixel `(x, y)` of `src` into `dst`:
/// a coarse pass on the half-resolution images over the whole radius, then
/// a +-2 px full-resolution pass and a parabolic subpixel fit.
fn track(src: &Pyramid<'_>, dst: &Pyramid<'_>, x: usize, y: usize, cfg: &MatcherConfig) -> Option<(Point2<f64>, f64)> {
    let r_full = cfg.patch / 2;
    let r_half = (r_full / 2).max(1);
    let (hx, hy) = (x / 2, y / 2);
    if !src.half.fits(hx as i64, hy as i64, r_half) {
        return None;
    }
    let coarse_t = Template::new(&src.half, hx, hy, r_half);
    if coarse_t.norm < 1e-9 {
        return None;
    }
    let coarse = coarse_t.search(&dst.half, hx as i64, hy as i64, (cfg.radius / 2) as i64)?;
    let fine_t = Template::new(&src.full, x, y, r_full);
    let fine = fine_t.search(&dst.full, 2 * coarse.x + 1, 2 * coarse.y + 1, 2)?;
    let p = Point2::new(fine.x as f64 + fine.sub_x + 0.5, fine.y as f64 + fine.sub_y + 0.5);
    Some((p, fine.score))
}

/// Grid-sampled patch matching from `a` to `b` with a forward-backward check.
/// Only grid points on `mask_a` (non-zero) with enough texture are tried.
pub fn match_patches(a: &GrayF32, mask_a: &GrayF32, b: &GrayF32, cfg: &MatcherConfig) -> Vec<Correspondence> {
    assert_eq!((a.width, a.height), (b.width, b.height), "matched images must have equal size");
    let (a_half, b_half) = (a.half(), b.half());
    let pa = Pyramid { full: Indexed::new(a), half: Indexed::new(&a_half) };
    let pb = Pyramid { full: Indexed::new(b), half: Indexed::new(&b_half) };
    let r = cfg.patch / 2;
    let mut out = Vec::new();
    for gy in 0..cfg.grid {
        for gx in 0..cfg.grid {
            let x = (gx * a.width + a.width / 2) / cfg.grid;
            let y = (gy * a.height + a.height / 2) / cfg.grid;
            if mask_a.get(x, y) <= 0.0 || !pa.full.fits(x as i64, y as i64, r) {
                continue;
            }
            if pa.full.stats(x, y, r).1 < cfg.min_std {
                continue;
            }
            let Some((pb_pt, score)) = track(&pa, &pb, x, y, cfg) else { continue };
            if score < cfg.min_ncc {
                continue;
            }
            let (bx, by) = (pb_pt.x.floor() as usize, pb_pt.y.floor() as usize);
            if !pb.full.fits(bx as i64, by as i64, r) {
                continue;
            }
            let Some((back, _)) = track(&pb, &pa, bx, by, cfg) else { continue };
            let origin = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            let residual = pb_pt - Point2::new(bx as f64 + 0.5, by as f64 + 0.5);
            if (back + residual - origin).norm() > cfg.fb_tolerance {
                continue;
            }
            out.push(Correspondence { a: origin, b: pb_pt, ncc: score });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth value noise: bilinear interpolation of a hashed lattice with
    /// spacing 5 px, evaluated at the shifted position.
    fn texture(w: usize, h: usize, dx: f64, dy: f64) -> GrayF32 {
        let lattice = |i: i64, j: i64| {
            let mut v = (i.wrapping_mul(73_856_093) ^ j.wrapping_mul(19_349_663)) as u64;
            v ^= v >> 13;
            v = v.wrapping_mul(0x5bd1_e995);
            v ^= v >> 15;
            (v % 200) as f64 + 28.0
        };
        GrayF32::from_fn(w, h, |x, y| {
            let (u, v) = ((x as f64 - dx) / 5.0, (y as f64 - dy) / 5.0);
            let (i, j) = (u.floor() as i64, v.floor() as i64);
            let (fu, fv) = (u - u.floor(), v - v.floor());
            let top = lattice(i, j) * (1.0 - fu) + lattice(i + 1, j) * fu;
            let bottom = lattice(i, j + 1) * (1.0 - fu) + lattice(i + 1, j + 1) * fu;
            (top * (1.0 - fv) + bottom * fv) as f32
        })
    }

    #[test]
    fn recovers_a_shift() {
        let a = texture(128, 128, 0.0, 0.0);
        let b = texture(128, 128, 9.0, -5.0);
        let mask = GrayF32::from_fn(128, 128, |_, _| 1.0);
        let cfg = MatcherConfig { grid: 8, ..MatcherConfig::default() };
        let m = match_patches(&a, &mask, &b, &cfg);
        assert!(m.len() > 20, "{}", m.len());
        for c in &m {
            assert!((c.b.x - c.a.x - 9.0).abs() < 0.3 && (c.b.y - c.a.y + 5.0).abs() < 0.3, "{c:?}");
        }
    }

    #[test]
    fn subpixel_shift() {
        let a = texture(96, 96, 0.0, 0.0);
        let b = texture(96, 96, 3.4, 1.7);
        let mask = GrayF32::from_fn(96, 96, |_, _| 1.0);
        let m = match_patches(&a, &mask, &b, &MatcherConfig { grid: 6, ..MatcherConfig::default() });
        assert!(!m.is_empty());
        for c in &m {
            assert!((c.b.x - c.a.x - 3.4).abs() < 0.25 && (c.b.y - c.a.y - 1.7).abs() < 0.25, "{c:?}");
        }
    }

    #[test]
    fn flat_images_give_nothing() {
        let a = GrayF32::from_fn(64, 64, |_, _| 200.0);
        let mask = GrayF32::from_fn(64, 64, |_, _| 1.0);
        assert!(match_patches(&a, &mask, &a, &MatcherConfig::default()).is_empty());
    }

    #[test]
    fn mask_restricts_sources() {
        let a = texture(64, 64, 0.0, 0.0);
        let mask = GrayF32::from_fn(64, 64, |x, _| if x < 32 { 1.0 } else { 0.0 });
        let m = match_patches(&a, &mask, &a, &MatcherConfig { grid: 8, ..MatcherConfig::default() });
        assert!(!m.is_empty());
        assert!(m.iter().all(|c| c.a.x < 32.0));
    }
}
