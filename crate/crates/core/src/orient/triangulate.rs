use nalgebra::{Matrix3x4, Matrix4, Point2, Vector3, Vector4};

use crate::geom::{CameraIntrinsics, RigidTransform};

/// `[R | t]` of a pose.
pub fn extrinsic_matrix(pose: &RigidTransform) -> Matrix3x4<f64> {
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
    p.set_column(3, &pose.translation);
    p
}

/// Linear two-view triangulation from normalized image coordinates.
/// Returns `None` for a degenerate system or a point at infinity.
pub fn triangulate_dlt(
    p_a: &Matrix3x4<f64>,
    p_b: &Matrix3x4<f64>,
    a: &Point2<f64>,
    b: &Point2<f64>,
) -> Option<Vector3<f64>> {
    let mut m = Matrix4::zeros();
    for (row, (p, x)) in [(p_a, a), (p_b, b)].into_iter().enumerate() {
        m.set_row(2 * row, &(p.row(2) * x.x - p.row(0)));
        m.set_row(2 * row + 1, &(p.row(2) * x.y - p.row(1)));
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let (imin, _) = svd.singular_values.argmin();
    let h: Vector4<f64> = v_t.row(imin).transpose();
    if h.w.abs() < 1e-12 {
        return None;
    }
    Some(h.xyz() / h.w)
}

/// Triangulates a pixel correspondence seen by two posed cameras sharing `k`
/// and returns the point with the larger of the two reprojection errors, in
/// pixels. Points behind either camera yield `None`.
pub fn triangulate_and_reproject(
    k: &CameraIntrinsics,
    pose_a: &RigidTransform,
    pose_b: &RigidTransform,
    a: &Point2<f64>,
    b: &Point2<f64>,
) -> Option<(Vector3<f64>, f64)> {
    let na = k.back_project(a);
    let nb = k.back_project(b);
    let x = triangulate_dlt(
        &extrinsic_matrix(pose_a),
        &extrinsic_matrix(pose_b),
        &Point2::new(na.x / na.z, na.y / na.z),
        &Point2::new(nb.x / nb.z, nb.y / nb.z),
    )?;
    let mut worst: f64 = 0.0;
    for (pose, obs) in [(pose_a, a), (pose_b, b)] {
        let cam = pose.transform_point(&x);
        if cam.z <= 1e-9 {
            return None;
        }
        let proj = k.project(&cam)?;
        worst = worst.max((proj - obs).norm());
    }
    Some((x, worst))
}
