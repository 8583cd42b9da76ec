use nalgebra::{Matrix3, Vector3, Vector6};

use super::GraphError;
use crate::geom::RigidTransform;

/// Below this angle the series expansions are used.
const SMALL_ANGLE: f64 = 1e-6;
/// `se3_log` refuses rotations closer than this to a half turn.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Exponential of a twist `[rho; omega]`: translational part first,
/// rotation vector last.
pub fn se3_exp(v: &Vector6<f64>) -> RigidTransform {
    let rho = v.fixed_rows::<3>(0).into_owned();
    let omega = v.fixed_rows::<3>(3).into_owned();
    let theta = omega.norm();
    let w = hat(&omega);
    let w2 = w * w;
    let (a, b, c) = if theta < SMALL_ANGLE {
        (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
    } else {
        let t2 = theta * theta;
        let half_sin = (theta / 2.0).sin();
        // 1 - cos(theta) = 2 sin^2(theta / 2), without the cancellation
        (theta.sin() / theta, 2.0 * half_sin * half_sin / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v_mat = Matrix3::identity() + w * b + w2 * c;
    RigidTransform::new(rotation, v_mat * rho)
}

/// Rotation vector of `r`; errors within [`NEAR_PI_MARGIN`] of a half turn.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, GraphError> {
    // skew = 2 sin(theta) * axis; atan2 keeps small angles accurate
    let skew = vee(&(r - r.transpose()));
    let sin = skew.norm() / 2.0;
    let cos = (r.trace() - 1.0) / 2.0;
    let theta = sin.atan2(cos);
    if theta > std::f64::consts::PI - NEAR_PI_MARGIN {
        return Err(GraphError::NearPiRotation(theta.to_degrees()));
    }
    if theta < SMALL_ANGLE {
        Ok(skew * (0.5 + theta * theta / 12.0))
    } else {
        Ok(skew * (theta / (2.0 * sin)))
    }
}

/// Inverse of [`se3_exp`].
pub fn se3_log(t: &RigidTransform) -> Result<Vector6<f64>, GraphError> {
    let omega = so3_log(&t.rotation)?;
    let theta = omega.norm();
    let w = hat(&omega);
    let k = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = theta / 2.0;
        (1.0 - half * half.cos() / half.sin()) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w * w * k;
    let rho = v_inv * t.translation;
    Ok(Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z))
}
