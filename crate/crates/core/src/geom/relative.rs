use nalgebra::Matrix3;

use super::RigidTransform;

/// Relative transform between two object-centric cameras from their object
/// poses: `x_v1 = R12 · x_v2 + t12` with `R12 = R1 R2^T` and
/// `t12 = t1 - R12 t2`.
pub fn compose_object_to_relative(pose1: &RigidTransform, pose2: &RigidTransform) -> RigidTransform {
    let r12 = pose1.rotation * pose2.rotation.transpose();
    RigidTransform::new(r12, pose1.translation - r12 * pose2.translation)
}

/// Lifts a virtual-camera relative transform back to the input cameras.
///
/// Each virtual camera relates to its input camera through `x_v = R_v x_c`.
/// Substituting into `x_v1 = R12_v x_v2 + t12_v` yields
/// `x_c2 = R_v2^T R12_v^T R_v1 · x_c1 - R_v2^T R12_v^T t12_v`.
///
/// The translation is expressed in object units (unit-sphere convention); only
/// its direction is meaningful when comparing against metric ground truth.
pub fn lift_relative_to_input_cameras(
    rel_v: &RigidTransform,
    r_v1: &Matrix3<f64>,
    r_v2: &Matrix3<f64>,
) -> RigidTransform {
    let back = r_v2.transpose() * rel_v.rotation.transpose();
    RigidTransform::new(back * r_v1, -(back * rel_v.translation))
}
