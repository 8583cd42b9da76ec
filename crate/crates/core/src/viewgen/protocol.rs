//! `/v1` wire protocol between the client and a generator service.
//!
//! ```text
//! GET  /v1/health    -> 200 {"status":"ok","model":"<id>"}
//! POST /v1/generate  {"image_png_b64", "views":[{"d_azimuth_deg","d_elevation_deg"}], "steps", "seed"}
//!                    -> 200 {"images_png_b64":[...]}   one entry per view, in order
//!                    -> 4xx {"error": "..."}
//! ```
//!
//! Images travel as base64-encoded 8-bit RGB PNG.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use super::{GeneratorFailure, ViewDelta, ViewRequest};

pub const HEALTH_PATH: &str = "/v1/health";
pub const GENERATE_PATH: &str = "/v1/generate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequestBody {
    pub image_png_b64: String,
    pub views: Vec<ViewDelta>,
    pub steps: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponseBody {
    pub images_png_b64: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn encode_png_b64(img: &RgbImage) -> Result<String, GeneratorFailure> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| GeneratorFailure::Decode(format!("png encode: {e}")))?;
    Ok(STANDARD.encode(bytes))
}

pub fn decode_png_b64(data: &str) -> Result<RgbImage, GeneratorFailure> {
    let bytes = STANDARD
        .decode(data.trim())
        .map_err(|e| GeneratorFailure::Decode(format!("base64: {e}")))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| GeneratorFailure::Decode(format!("png: {e}")))?;
    Ok(img.to_rgb8())
}

impl GenerateRequestBody {
    pub fn from_request(req: &ViewRequest) -> Result<Self, GeneratorFailure> {
        Ok(Self {
            image_png_b64: encode_png_b64(&req.image)?,
            views: req.deltas.clone(),
            steps: req.steps,
            seed: req.seed,
        })
    }

    pub fn into_request(self) -> Result<ViewRequest, GeneratorFailure> {
        let image = decode_png_b64(&self.image_png_b64)?;
        ViewRequest::new(image, self.views, self.steps, self.seed)
    }
}

impl GenerateResponseBody {
    pub fn from_images(images: &[RgbImage]) -> Result<Self, GeneratorFailure> {
        Ok(Self { images_png_b64: images.iter().map(encode_png_b64).collect::<Result<_, _>>()? })
    }

    pub fn decode_images(&self) -> Result<Vec<RgbImage>, GeneratorFailure> {
        self.images_png_b64.iter().map(|s| decode_png_b64(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn wire_field_names() {
        let body = GenerateRequestBody {
            image_png_b64: "AA==".into(),
            views: vec![ViewDelta::new(10.0, -5.5)],
            steps: 50,
            seed: 7,
        };
        let v: serde_json::Value = serde_json::to_value(&body).unwrap();
        assert_eq!(v["views"][0]["d_azimuth_deg"], 10.0);
        assert_eq!(v["views"][0]["d_elevation_deg"], -5.5);
        assert_eq!(v["steps"], 50);
        assert_eq!(v["seed"], 7);
    }

    #[test]
    fn png_round_trip() {
        let img = RgbImage::from_fn(9, 9, |x, y| Rgb([x as u8 * 20, y as u8 * 3, 99]));
        assert_eq!(decode_png_b64(&encode_png_b64(&img).unwrap()).unwrap(), img);
        assert!(matches!(decode_png_b64("not base64!"), Err(GeneratorFailure::Decode(_))));
        assert!(matches!(decode_png_b64("AAAA"), Err(GeneratorFailure::Decode(_))));
    }

    #[test]
    fn request_round_trip_through_json() {
        let img = RgbImage::from_fn(16, 16, |x, _| Rgb([x as u8, 0, 0]));
        let req = ViewRequest::new(img, vec![ViewDelta::new(1.0, 2.0), ViewDelta::new(-3.0, 4.0)], 75, 11).unwrap();
        let json = serde_json::to_string(&GenerateRequestBody::from_request(&req).unwrap()).unwrap();
        let parsed: GenerateRequestBody = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.into_request().unwrap(), req);
    }
}
