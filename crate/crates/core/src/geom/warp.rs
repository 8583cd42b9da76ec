use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{
    distance_for_inscribed_sphere, look_at_rotation, object_centric_homography, virtual_intrinsics, CameraIntrinsics, GeomError, Homography,
    RigidTransform, SquareRoi,
};
use crate::imgproc::{sample_mask_nearest, sample_rgb, WHITE};

/// Fill colour for virtual pixels that map outside the source image.
pub const BACKGROUND: Rgb<u8> = Rgb([WHITE, WHITE, WHITE]);

/// Warps `image` and `mask` into an `s_v x s_v` view through `h`.
///
/// Every destination pixel center is mapped back through `h^-1`; colour is
/// sampled bilinearly, the mask with nearest neighbour. Pixels that land
/// outside the source become [`BACKGROUND`] / unset.
pub fn warp_image(
    image: &RgbImage,
    mask: &GrayImage,
    h: &Homography,
    s_v: u32,
) -> Result<(RgbImage, GrayImage), GeomError> {
    let inv = h.inverse()?;
    let mut out = RgbImage::from_pixel(s_v, s_v, BACKGROUND);
    let mut out_mask = GrayImage::new(s_v, s_v);
    for y in 0..s_v {
        for x in 0..s_v {
            let dst = Point2::new(f64::from(x) + 0.5, f64::from(y) + 0.5);
            let Some(src) = inv.apply(&dst) else { continue };
            if let Some(c) = sample_rgb(image, src.x, src.y) {
                out.put_pixel(x, y, c);
            }
            if let Some(m) = sample_mask_nearest(mask, src.x, src.y) {
                out_mask.put_pixel(x, y, Luma([m]));
            }
        }
    }
    Ok((out, out_mask))
}

/// Square view intrinsics with the camera-to-object-center distance.
///
/// For a tight object-centric view the distance follows from the intrinsics
/// through the inscribed-sphere rule; a view framed with a margin keeps the
/// distance of the tight view it was widened from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewFrame {
    pub intrinsics: CameraIntrinsics,
    pub distance: f64,
}

impl ViewFrame {
    pub fn inscribed(k_v: &CameraIntrinsics) -> Self {
        Self { intrinsics: *k_v, distance: distance_for_inscribed_sphere(k_v) }
    }
}

/// An input image re-rendered by its object-centric virtual camera.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualView {
    pub image: RgbImage,
    pub mask: GrayImage,
    /// Virtual intrinsics `K_v`.
    pub intrinsics: CameraIntrinsics,
    /// Pure rotation `R_v` from the input camera to the virtual camera.
    pub rotation: RigidTransform,
    pub roi: SquareRoi,
}

impl VirtualView {
    /// Rotates the camera of `(image, mask, k)` towards `roi` and warps both
    /// onto an `s_v x s_v` canvas.
    pub fn new(image: &RgbImage, mask: &GrayImage, k: &CameraIntrinsics, roi: SquareRoi, s_v: u32) -> Result<Self, GeomError> {
        let rotation = look_at_rotation(&roi.center, k);
        let intrinsics = virtual_intrinsics(k, &roi, s_v)?;
        let h = object_centric_homography(k, &intrinsics, &rotation);
        let (image, mask) = warp_image(image, mask, &h, s_v)?;
        Ok(Self { image, mask, intrinsics, rotation, roi })
    }

    /// Same as [`VirtualView::new`] with the ROI taken from the mask.
    pub fn from_mask(image: &RgbImage, mask: &GrayImage, k: &CameraIntrinsics, s_v: u32) -> Result<Self, GeomError> {
        Self::new(image, mask, k, SquareRoi::from_mask(mask)?, s_v)
    }

    /// The view of [`VirtualView::new`] with `margin * roi.size` added on
    /// every side of the ROI and everything outside the mask painted white.
    /// The virtual rotation is that of the tight view.
    pub fn with_margin(
        image: &RgbImage,
        mask: &GrayImage,
        k: &CameraIntrinsics,
        roi: SquareRoi,
        s_v: u32,
        margin: f64,
    ) -> Result<Self, GeomError> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(GeomError::InvalidRoi(format!("margin {margin} must be finite and non-negative")));
        }
        let wide = SquareRoi::new(roi.center, roi.size * (1.0 + 2.0 * margin))?;
        let mut view = Self::new(image, mask, k, wide, s_v)?;
        for (p, m) in view.image.pixels_mut().zip(view.mask.pixels()) {
            if m[0] == 0 {
                *p = BACKGROUND;
            }
        }
        view.roi = roi;
        Ok(view)
    }
}
