//! Small raster helpers shared by the warping, matching and scoring code.
//!
//! Images are `image::RgbImage` / `image::GrayImage` at the API boundary. The
//! numeric work happens on [`GrayF32`] buffers.

use image::{GrayImage, Luma, Rgb, RgbImage};

/// Intensity of the background fill, and of "empty" generator output.
pub const WHITE: u8 = 255;

/// Pixels whose channels all exceed this value count as background when a
/// mask has to be recovered from a generated image.
pub const FOREGROUND_THRESHOLD: u8 = 245;

/// Single-channel floating point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayF32 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayF32 {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at continuous index coordinates (pixel centers on integers).
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        sample_index_space(self.width, self.height, x, y, |ix, iy| self.get(ix, iy))
    }

    /// 2x2 box downsampling; odd trailing rows/columns are dropped.
    pub fn half(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        Self::from_fn(w, h, |x, y| {
            0.25 * (self.get(2 * x, 2 * y)
                + self.get(2 * x + 1, 2 * y)
                + self.get(2 * x, 2 * y + 1)
                + self.get(2 * x + 1, 2 * y + 1))
        })
    }
}

#[inline]
pub fn luma(p: &Rgb<u8>) -> f32 {
    0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2])
}

pub fn to_gray(img: &RgbImage) -> GrayF32 {
    GrayF32 {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.pixels().map(luma).collect(),
    }
}

pub fn mask_to_f32(mask: &GrayImage) -> GrayF32 {
    GrayF32 {
        width: mask.width() as usize,
        height: mask.height() as usize,
        data: mask.pixels().map(|p| if p[0] > 127 { 1.0 } else { 0.0 }).collect(),
    }
}

/// Area-averaging resize to `size x size` (exact box filter for integer ratios).
pub fn resize_area(src: &GrayF32, size: usize) -> GrayF32 {
    let sx = src.width as f64 / size as f64;
    let sy = src.height as f64 / size as f64;
    GrayF32::from_fn(size, size, |x, y| {
        let (x0, x1) = (x as f64 * sx, (x + 1) as f64 * sx);
        let (y0, y1) = (y as f64 * sy, (y + 1) as f64 * sy);
        let mut acc = 0.0f64;
        let mut area = 0.0f64;
        let mut yy = y0.floor() as usize;
        while (yy as f64) < y1 && yy < src.height {
            let wy = (y1.min(yy as f64 + 1.0) - y0.max(yy as f64)).max(0.0);
            let mut xx = x0.floor() as usize;
            while (xx as f64) < x1 && xx < src.width {
                let wx = (x1.min(xx as f64 + 1.0) - x0.max(xx as f64)).max(0.0);
                acc += f64::from(src.get(xx, yy)) * wx * wy;
                area += wx * wy;
                xx += 1;
            }
            yy += 1;
        }
        if area > 0.0 {
            (acc / area) as f32
        } else {
            0.0
        }
    })
}

/// Area-averaged resample of the square window with top-left corner
/// `(x0, y0)` and side `side` to `size x size`. Parts of the window outside
/// the image read as `fill`.
pub fn resize_window(src: &GrayF32, x0: f64, y0: f64, side: f64, size: usize, fill: f32) -> GrayF32 {
    let scale = side / size as f64;
    let (w, h) = (src.width as f64, src.height as f64);
    GrayF32::from_fn(size, size, |x, y| {
        let (u0, u1) = (x0 + x as f64 * scale, x0 + (x + 1) as f64 * scale);
        let (v0, v1) = (y0 + y as f64 * scale, y0 + (y + 1) as f64 * scale);
        let mut acc = 0.0f64;
        let mut yy = v0.floor();
        while yy < v1 {
            let wy = (v1.min(yy + 1.0) - v0.max(yy)).max(0.0);
            let mut xx = u0.floor();
            while xx < u1 {
                let wx = (u1.min(xx + 1.0) - u0.max(xx)).max(0.0);
                let v = if xx >= 0.0 && yy >= 0.0 && xx < w && yy < h { src.get(xx as usize, yy as usize) } else { fill };
                acc += f64::from(v) * wx * wy;
                xx += 1.0;
            }
            yy += 1.0;
        }
        (acc / (scale * scale)) as f32
    })
}

/// Shared bilinear kernel. `(x, y)` are index coordinates; positions up to half
/// a pixel outside the grid clamp to the border, anything further is `None`.
#[inline]
fn sample_index_space<T>(w: usize, h: usize, x: f64, y: f64, fetch: impl Fn(usize, usize) -> T) -> Option<T>
where
    T: std::ops::Mul<f32, Output = T> + std::ops::Add<Output = T>,
{
    if !(x >= -0.5 && y >= -0.5 && x <= w as f64 - 0.5 && y <= h as f64 - 0.5) {
        return None;
    }
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = (xc - x0 as f64) as f32;
    let ay = (yc - y0 as f64) as f32;
    if ax == 0.0 && ay == 0.0 {
        return Some(fetch(x0, y0));
    }
    let top = fetch(x0, y0) * (1.0 - ax) + fetch(x1, y0) * ax;
    let bottom = fetch(x0, y1) * (1.0 - ax) + fetch(x1, y1) * ax;
    Some(top * (1.0 - ay) + bottom * ay)
}

#[derive(Clone, Copy)]
struct Rgbf([f32; 3]);

impl std::ops::Mul<f32> for Rgbf {
    type Output = Rgbf;
    fn mul(self, s: f32) -> Rgbf {
        Rgbf([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl std::ops::Add for Rgbf {
    type Output = Rgbf;
    fn add(self, o: Rgbf) -> Rgbf {
        Rgbf([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

/// Bilinear RGB sample at continuous pixel coordinates (pixel centers at `+0.5`).
pub fn sample_rgb(img: &RgbImage, u: f64, v: f64) -> Option<Rgb<u8>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    sample_index_space(w, h, u - 0.5, v - 0.5, |x, y| {
        let p = img.get_pixel(x as u32, y as u32);
        Rgbf([f32::from(p[0]), f32::from(p[1]), f32::from(p[2])])
    })
    .map(|c| Rgb([quantize(c.0[0]), quantize(c.0[1]), quantize(c.0[2])]))
}

/// Nearest-neighbour mask lookup at continuous pixel coordinates.
pub fn sample_mask_nearest(mask: &GrayImage, u: f64, v: f64) -> Option<u8> {
    if !(u >= 0.0 && v >= 0.0) {
        return None;
    }
    let (x, y) = (u.floor() as u64, v.floor() as u64);
    if x >= u64::from(mask.width()) || y >= u64::from(mask.height()) {
        return None;
    }
    Some(mask.get_pixel(x as u32, y as u32)[0])
}

#[inline]
fn quantize(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Mask of pixels that differ from the white background.
pub fn foreground_mask(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get_pixel(x, y);
        if p.0.iter().all(|&c| c > FOREGROUND_THRESHOLD) {
            Luma([0])
        } else {
            Luma([255])
        }
    })
}

/// Axis-aligned bounding box `(min_x, min_y, max_x, max_y)` of the set
/// pixels of a mask, inclusive.
pub fn mask_bbox(mask: &GrayImage) -> Option<(u32, u32, u32, u32)> {
    let mut bbox: Option<(u32, u32, u32, u32)> = None;
    for (x, y, p) in mask.enumerate_pixels() {
        if p[0] > 127 {
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    bbox
}

pub fn mask_area(mask: &GrayImage) -> usize {
    mask.pixels().filter(|p| p[0] > 127).count()
}

/// Rotates `src` about its center by `angle_deg`: a point at offset `p` from
/// the center moves to `Rz(angle) p` in `(x right, y down)` pixel axes.
pub fn rotate_gray(src: &GrayF32, angle_deg: f64, fill: f32) -> GrayF32 {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let cx = (src.width as f64 - 1.0) / 2.0;
    let cy = (src.height as f64 - 1.0) / 2.0;
    GrayF32::from_fn(src.width, src.height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        src.sample(cx + c * dx + s * dy, cy - s * dx + c * dy).unwrap_or(fill)
    })
}

/// Zero-mean normalized cross-correlation over the pixels where `weight` is
/// non-zero (all pixels when `None`). Returns 0 when either side is constant.
pub fn ncc(a: &GrayF32, b: &GrayF32, weight: Option<&GrayF32>) -> f64 {
    debug_assert_eq!((a.width, a.height), (b.width, b.height));
    let mut n = 0.0f64;
    let (mut sa, mut sb) = (0.0f64, 0.0f64);
    for i in 0..a.data.len() {
        if weight.map_or(true, |w| w.data[i] > 0.0) {
            n += 1.0;
            sa += f64::from(a.data[i]);
            sb += f64::from(b.data[i]);
        }
    }
    if n < 2.0 {
        return 0.0;
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut sab, mut saa, mut sbb) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..a.data.len() {
        if weight.map_or(true, |w| w.data[i] > 0.0) {
            let da = f64::from(a.data[i]) - ma;
            let db = f64::from(b.data[i]) - mb;
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
    }
    let denom = (saa * sbb).sqrt();
    if denom <= 1e-9 * n {
        return 0.0;
    }
    (sab / denom).clamp(-1.0, 1.0)
}
