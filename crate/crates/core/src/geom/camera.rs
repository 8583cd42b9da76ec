use nalgebra::Point2;

use super::{rot_x, rot_y, CameraIntrinsics, GeomError, Homography, RigidTransform, SquareRoi};

/// Smallest virtual image side accepted by [`virtual_intrinsics`].
pub const MIN_VIRTUAL_SIZE: u32 = 16;

/// Pure rotation `R_v = R_y · R_x` that turns the camera towards pixel `center`.
///
/// `R_x` removes the vertical component of the viewing ray, `R_y` then removes
/// the horizontal one, so `R_v · normalize(K^-1 [c; 1]) = (0, 0, 1)`.
pub fn look_at_rotation(center: &Point2<f64>, k: &CameraIntrinsics) -> RigidTransform {
    let ray = k.back_project(center);
    let pitch = ray.y.atan2(ray.z);
    let z_after_pitch = (ray.y * ray.y + ray.z * ray.z).sqrt();
    let yaw = (-ray.x).atan2(z_after_pitch);
    RigidTransform::from_rotation(rot_y(yaw) * rot_x(pitch))
}

/// Intrinsics of the `s_v x s_v` object-centric camera looking at `roi`.
///
/// The focal length scales the distance from the optical center to the ROI
/// center on the image plane, `sqrt(f^2 + |c|^2)`, so that the ROI side maps
/// onto the full virtual image. `c` is measured from the principal point.
pub fn virtual_intrinsics(k: &CameraIntrinsics, roi: &SquareRoi, s_v: u32) -> Result<CameraIntrinsics, GeomError> {
    if s_v < MIN_VIRTUAL_SIZE {
        return Err(GeomError::InvalidIntrinsics(format!(
            "virtual image size {s_v} below minimum {MIN_VIRTUAL_SIZE}"
        )));
    }
    if !(roi.size > 0.0) {
        return Err(GeomError::InvalidRoi(format!("size must be positive, got {}", roi.size)));
    }
    let f = k.focal();
    let offset = roi.offset_from(k).norm();
    let s_v_f = f64::from(s_v);
    let f_v = s_v_f * (f * f + offset * offset).sqrt() / roi.size;
    CameraIntrinsics::square(f_v, s_v)
}

/// `H = K_v · R_v · K^-1`, mapping input pixels into the virtual view.
pub fn object_centric_homography(
    k: &CameraIntrinsics,
    k_v: &CameraIntrinsics,
    r_v: &RigidTransform,
) -> Homography {
    Homography::new(k_v.matrix() * r_v.rotation * k.inverse_matrix())
}

/// Camera distance at which the silhouette of the unit sphere exactly
/// inscribes a square virtual image.
///
/// With `t = s_v / (2 f_v)` the silhouette half-angle `θ` satisfies
/// `tan θ = t` and `sin θ = 1 / d`, hence `d = sqrt(1 + t^2) / t`.
pub fn distance_for_inscribed_sphere(k_v: &CameraIntrinsics) -> f64 {
    debug_assert_eq!(k_v.width, k_v.height, "virtual intrinsics must be square");
    let t = f64::from(k_v.width) / (2.0 * k_v.focal());
    (1.0 + t * t).sqrt() / t
}
