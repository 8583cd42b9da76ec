use image::{GrayImage, Luma};

use super::EvalError;
use crate::imgproc::mask_bbox;

/// Dilates `mask` with a disk of radius `round(percent / 100 * s)`, `s` the
/// longer side of the mask's bounding box. `percent == 0` and empty masks
/// return the input.
pub fn dilate_mask(mask: &GrayImage, percent: f64) -> Result<GrayImage, EvalError> {
    if !(percent >= 0.0) || !percent.is_finite() {
        return Err(EvalError::InvalidArgument(format!("dilation percent must be non-negative, got {percent}")));
    }
    let Some((x0, y0, x1, y1)) = mask_bbox(mask) else {
        return Ok(mask.clone());
    };
    let side = f64::from((x1 - x0 + 1).max(y1 - y0 + 1));
    let radius = (percent / 100.0 * side).round() as i64;
    if radius == 0 {
        return Ok(mask.clone());
    }
    Ok(dilate_disk(mask, radius))
}

/// Disk dilation as the union over rows `dy` of the source row dilated
/// horizontally by the disk's half width at `dy`.
fn dilate_disk(mask: &GrayImage, radius: i64) -> GrayImage {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    // prefix[y][x] counts set pixels in row y before column x
    let prefix: Vec<Vec<u32>> = (0..h)
        .map(|y| {
            let mut row = Vec::with_capacity(w as usize + 1);
            row.push(0);
            let mut acc = 0;
            for x in 0..w {
                acc += u32::from(mask.get_pixel(x as u32, y as u32)[0] > 127);
                row.push(acc);
            }
            row
        })
        .collect();
    let half: Vec<i64> = (-radius..=radius)
        .map(|dy| (((radius * radius - dy * dy) as f64).sqrt().floor()) as i64)
        .collect();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (i64::from(x), i64::from(y));
        let hit = (-radius..=radius).any(|dy| {
            let yy = y + dy;
            if yy < 0 || yy >= h {
                return false;
            }
            let hw = half[(dy + radius) as usize];
            let (lo, hi) = ((x - hw).max(0) as usize, ((x + hw).min(w - 1) + 1) as usize);
            let row = &prefix[yy as usize];
            row[hi] > row[lo]
        });
        Luma([if hit { 255 } else { 0 }])
    })
}
