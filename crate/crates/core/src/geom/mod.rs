//! Object-centric camera geometry.
//!
//! Conventions used throughout the crate:
//!
//! * Cameras follow the computer-vision convention: `+x` right, `+y` down,
//!   `+z` forward. A [`RigidTransform`] stored as a pose maps points from the
//!   source frame (object or world) into the camera frame.
//! * Pixel `(col, row)` covers the square `[col, col + 1) x [row, row + 1)`, so
//!   its center sits at `(col + 0.5, row + 0.5)`. A `s x s` image therefore has
//!   its geometric center at `(s / 2, s / 2)`.
//! * The canonical object frame is z-up. Azimuth is measured in the xy-plane
//!   from `+x` towards `+y`, elevation from the equator towards `+z`.

mod camera;
mod relative;
mod viewpoint;
mod warp;

pub use camera::{
    distance_for_inscribed_sphere, MIN_VIRTUAL_SIZE, look_at_rotation, object_centric_homography,
    virtual_intrinsics,
};
pub use relative::{compose_object_to_relative, lift_relative_to_input_cameras};
pub use viewpoint::{look_at_pose, pose_to_viewpoint, viewpoint_to_pose};
pub use warp::{warp_image, ViewFrame, VirtualView, BACKGROUND};

use nalgebra::{Matrix3, Point2, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the geometry primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("homography is not invertible (normalized |det| = {0:e})")]
    NonInvertibleHomography(f64),
    #[error("elevation {0} deg leaves the look-at up vector undefined")]
    DegenerateElevation(f64),
    #[error("camera center lies on the z-axis pole; azimuth is undefined")]
    DegeneratePole,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid viewpoint: {0}")]
    InvalidViewpoint(String),
    #[error("invalid region of interest: {0}")]
    InvalidRoi(String),
}

/// Pinhole intrinsics of a real or virtual camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Square intrinsics with the principal point at the image center.
    pub fn square(focal: f64, size: u32) -> Result<Self, GeomError> {
        let c = f64::from(size) / 2.0;
        Self::new(focal, focal, c, c, size, size)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeomError::InvalidIntrinsics("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::InvalidIntrinsics("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    /// Mean focal length, used where a single focal length is assumed.
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn principal_point(&self) -> Point2<f64> {
        Point2::new(self.cx, self.cy)
    }

    /// Projects a camera-frame point; `None` when it is not in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Point2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        Some(Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Unnormalized viewing ray `K^-1 [u, v, 1]` through a pixel position.
    pub fn back_project(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }
}

/// A rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Rotation by `angle` radians about `axis`, with zero translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self::from_rotation(*r.matrix())
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Camera center in the source frame when `self` is a source-to-camera pose.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Largest deviation of `R^T R` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.abs().max().max((self.rotation.determinant() - 1.0).abs())
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.orthonormality_error() <= tol
    }

    /// Re-orthonormalizes the rotation through its polar decomposition.
    pub fn orthonormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self::new(r, self.translation)
    }
}

/// Square bounding box around the object in an input image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareRoi {
    pub center: Point2<f64>,
    pub size: f64,
}

impl SquareRoi {
    pub fn new(center: Point2<f64>, size: f64) -> Result<Self, GeomError> {
        if !(size.is_finite() && size > 0.0) {
            return Err(GeomError::InvalidRoi(format!("size must be positive, got {size}")));
        }
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(GeomError::InvalidRoi("center must be finite".into()));
        }
        Ok(Self { center, size })
    }

    /// Tight square around the set pixels of `mask`: centered on the bounding
    /// box, side equal to its longer edge.
    pub fn from_mask(mask: &image::GrayImage) -> Result<Self, GeomError> {
        let (x0, y0, x1, y1) = crate::imgproc::mask_bbox(mask).ok_or_else(|| GeomError::InvalidRoi("mask is empty".into()))?;
        let (w, h) = (f64::from(x1 - x0 + 1), f64::from(y1 - y0 + 1));
        Self::new(Point2::new(f64::from(x0) + w / 2.0, f64::from(y0) + h / 2.0), w.max(h))
    }

    /// Offset of the ROI center from the principal point of `k`.
    pub fn offset_from(&self, k: &CameraIntrinsics) -> Vector2<f64> {
        self.center - k.principal_point()
    }
}

/// Camera placement on a sphere around the canonical object origin.
///
/// Generated reference views live on the upper hemisphere, but the type also
/// admits slightly negative elevations because the orientation search and the
/// refinement step probe below the equator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalViewpoint {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub inplane_deg: f64,
    pub distance: f64,
}

impl SphericalViewpoint {
    /// Builds a viewpoint with azimuth wrapped into `[0, 360)` and in-plane
    /// rotation wrapped into `[-180, 180)`.
    pub fn new(azimuth_deg: f64, elevation_deg: f64, inplane_deg: f64, distance: f64) -> Self {
        Self {
            azimuth_deg: wrap_deg_0_360(azimuth_deg),
            elevation_deg,
            inplane_deg: wrap_deg_pm180(inplane_deg),
            distance,
        }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.distance.is_finite() && self.distance > 1.0) {
            return Err(GeomError::InvalidViewpoint(format!(
                "distance must exceed the unit sphere radius, got {}",
                self.distance
            )));
        }
        if !(0.0..360.0).contains(&self.azimuth_deg) {
            return Err(GeomError::InvalidViewpoint(format!("azimuth {} outside [0, 360)", self.azimuth_deg)));
        }
        if !(-180.0..180.0).contains(&self.inplane_deg) {
            return Err(GeomError::InvalidViewpoint(format!("inplane {} outside [-180, 180)", self.inplane_deg)));
        }
        if !(self.elevation_deg > -90.0 && self.elevation_deg < 90.0) {
            return Err(GeomError::DegenerateElevation(self.elevation_deg));
        }
        Ok(())
    }

    /// Unit direction from the object origin to the camera center.
    pub fn direction(&self) -> Vector3<f64> {
        let (a, e) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
    }

    pub fn camera_center(&self) -> Vector3<f64> {
        self.direction() * self.distance
    }
}

/// Projective map between two images, defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub matrix: Matrix3<f64>,
}

impl Homography {
    pub const MIN_NORMALIZED_DET: f64 = 1e-12;

    pub fn new(matrix: Matrix3<f64>) -> Self {
        Self { matrix }
    }

    /// Copy scaled so its largest absolute entry is one.
    pub fn normalized(&self) -> Self {
        let m = self.matrix.abs().max();
        if m > 0.0 {
            Self::new(self.matrix / m)
        } else {
            *self
        }
    }

    pub fn is_invertible(&self) -> bool {
        self.normalized().matrix.determinant().abs() > Self::MIN_NORMALIZED_DET
    }

    pub fn inverse(&self) -> Result<Self, GeomError> {
        let n = self.normalized();
        let det = n.matrix.determinant();
        if det.abs() <= Self::MIN_NORMALIZED_DET {
            return Err(GeomError::NonInvertibleHomography(det.abs()));
        }
        n.matrix
            .try_inverse()
            .map(Self::new)
            .ok_or(GeomError::NonInvertibleHomography(det.abs()))
    }

    /// Maps a pixel position; `None` when it lands on the line at infinity.
    pub fn apply(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        let q = self.matrix * Vector3::new(p.x, p.y, 1.0);
        if q.z.abs() < 1e-15 {
            return None;
        }
        Some(Point2::new(q.x / q.z, q.y / q.z))
    }
}

pub fn wrap_deg_0_360(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

pub fn wrap_deg_pm180(a: f64) -> f64 {
    wrap_deg_0_360(a + 180.0) - 180.0
}

/// Wraps an angle difference into `(-180, 180]`.
pub fn wrap_delta_deg(a: f64) -> f64 {
    let w = wrap_deg_pm180(a);
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Rotation about the camera's optical (`+z`) axis.
pub fn rot_z(angle_rad: f64) -> Matrix3<f64> {
    let (s, c) = angle_rad.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_x(angle_rad: f64) -> Matrix3<f64> {
    let (s, c) = angle_rad.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle_rad: f64) -> Matrix3<f64> {
    let (s, c) = angle_rad.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps() {
        assert_eq!(wrap_deg_0_360(-10.0), 350.0);
        assert_eq!(wrap_deg_0_360(360.0), 0.0);
        assert_eq!(wrap_deg_pm180(180.0), -180.0);
        assert_eq!(wrap_delta_deg(-180.0), 180.0);
        assert_eq!(wrap_delta_deg(10.0 - 350.0), 20.0);
        assert!(wrap_deg_0_360(-1e-18) < 360.0);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 1, 1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, f64::NAN, 0.0, 1, 1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 1).is_err());
        let k = CameraIntrinsics::new(500.0, 400.0, 320.0, 240.0, 640, 480).unwrap();
        let ki = k.inverse_matrix() * k.matrix();
        assert!((ki - Matrix3::identity()).abs().max() < 1e-15);
        assert_eq!(k.focal(), 450.0);
    }

    #[test]
    fn rigid_inverse_and_compose() {
        let a = RigidTransform::new(rot_x(0.3) * rot_y(-1.1), Vector3::new(1.0, -2.0, 0.5));
        let id = a.compose(&a.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        assert!(a.is_valid(1e-12));
        let p = Vector3::new(0.2, 0.4, -3.0);
        let c = a.camera_center();
        assert!(a.transform_point(&c).norm() < 1e-12);
        assert!((a.inverse().transform_point(&a.transform_point(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn homography_singular() {
        let h = Homography::new(Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0));
        assert!(!h.is_invertible());
        assert!(matches!(h.inverse(), Err(GeomError::NonInvertibleHomography(_))));
    }

    #[test]
    fn roi_rejects_nonpositive() {
        assert!(SquareRoi::new(Point2::new(1.0, 1.0), 0.0).is_err());
        assert!(SquareRoi::new(Point2::new(1.0, 1.0), 3.0).is_ok());
    }
}
