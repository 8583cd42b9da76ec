use nalgebra::{Matrix3, Vector3};

use super::{rot_z, wrap_deg_0_360, wrap_deg_pm180, GeomError, RigidTransform, SphericalViewpoint};

/// Object-to-camera rotation of an upright camera at `(azimuth, elevation)`
/// looking at the origin with `+z` up.
///
/// The right axis `(-sin a, cos a, 0)` does not depend on the elevation, which
/// keeps the construction continuous over the pole.
fn upright_rotation(azimuth_rad: f64, elevation_rad: f64) -> Matrix3<f64> {
    let (sa, ca) = azimuth_rad.sin_cos();
    let (se, ce) = elevation_rad.sin_cos();
    let forward = -Vector3::new(ce * ca, ce * sa, se);
    let right = Vector3::new(-sa, ca, 0.0);
    let down = forward.cross(&right);
    Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

/// Look-at pose without the elevation guard. Used by the renderer, which may
/// legitimately be asked for views past the pole.
pub fn look_at_pose(vp: &SphericalViewpoint) -> RigidTransform {
    let base = upright_rotation(vp.azimuth_deg.to_radians(), vp.elevation_deg.to_radians());
    let rotation = rot_z(vp.inplane_deg.to_radians()) * base;
    let translation = -(rotation * vp.camera_center());
    RigidTransform::new(rotation, translation)
}

/// Object-to-camera pose of a camera placed at `vp`, looking at the origin,
/// then rolled by `vp.inplane_deg` about its optical axis.
pub fn viewpoint_to_pose(vp: &SphericalViewpoint) -> Result<RigidTransform, GeomError> {
    if !(vp.elevation_deg < 90.0 && vp.elevation_deg > -90.0) {
        return Err(GeomError::DegenerateElevation(vp.elevation_deg));
    }
    if !(vp.distance.is_finite() && vp.distance > 0.0) {
        return Err(GeomError::InvalidViewpoint(format!("distance {} must be positive", vp.distance)));
    }
    Ok(look_at_pose(vp))
}

/// Inverse of [`viewpoint_to_pose`] for poses that look at the origin.
pub fn pose_to_viewpoint(pose: &RigidTransform) -> Result<SphericalViewpoint, GeomError> {
    let c = pose.camera_center();
    let distance = c.norm();
    let horizontal = c.x.hypot(c.y);
    if horizontal <= 1e-9 * distance.max(1.0) {
        return Err(GeomError::DegeneratePole);
    }
    let azimuth = c.y.atan2(c.x);
    let elevation = (c.z / distance).clamp(-1.0, 1.0).asin();
    let roll = pose.rotation * upright_rotation(azimuth, elevation).transpose();
    let inplane = roll[(1, 0)].atan2(roll[(0, 0)]);
    Ok(SphericalViewpoint {
        azimuth_deg: wrap_deg_0_360(azimuth.to_degrees()),
        elevation_deg: elevation.to_degrees(),
        inplane_deg: wrap_deg_pm180(inplane.to_degrees()),
        distance,
    })
}
