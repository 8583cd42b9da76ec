use image::{Rgb, RgbImage};

use super::{GeneratorFailure, ViewDelta, ViewGenerator, ViewRequest};

/// Backend that answers every delta with a fixed test card carrying the delta
/// values as two bar codes. Bit-deterministic; ignores steps and seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

impl ViewGenerator for MockGenerator {
    fn generate(&self, request: &ViewRequest) -> Result<Vec<RgbImage>, GeneratorFailure> {
        request.validate()?;
        let size = request.image.width();
        Ok(request.deltas.iter().map(|d| test_card(size, d)).collect())
    }
}

fn bar_length(value_deg: f64, size: u32) -> u32 {
    let frac = (value_deg.clamp(-180.0, 180.0) + 180.0) / 360.0;
    (frac * f64::from(size)).round() as u32
}

/// Square test card: colour quadrants with a gradient, plus two black bars in
/// the top quarter whose lengths encode `Δazimuth` and `Δelevation` over
/// `[-180, 180]` degrees.
pub fn test_card(size: u32, delta: &ViewDelta) -> RgbImage {
    let band = (size / 8).max(1);
    let az_len = bar_length(delta.azimuth_deg, size);
    let el_len = bar_length(delta.elevation_deg, size);
    RgbImage::from_fn(size, size, |x, y| {
        if y < band {
            return if x < az_len { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) };
        }
        if y < 2 * band {
            return if x < el_len { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) };
        }
        let g = ((x + y) * 255 / (2 * size).max(1)) as u8;
        match (2 * x < size, 2 * y < size) {
            (true, true) => Rgb([200, g, 40]),
            (false, true) => Rgb([40, 200, g]),
            (true, false) => Rgb([g, 40, 200]),
            (false, false) => Rgb([g, g, 60]),
        }
    })
}

/// Reads the delta bar codes back from a test card, with a resolution of
/// `360 / size` degrees.
pub fn decode_stamp(card: &RgbImage) -> ViewDelta {
    let size = card.width();
    let band = (size / 8).max(1);
    let count = |row: u32| (0..size).filter(|&x| card.get_pixel(x, row)[0] < 128).count() as f64;
    let decode = |len: f64| len / f64::from(size) * 360.0 - 180.0;
    ViewDelta::new(decode(count(band / 2)), decode(count(band + band / 2)))
}
