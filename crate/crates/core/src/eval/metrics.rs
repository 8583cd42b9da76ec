use nalgebra::{Matrix3, Vector3};

use super::EvalError;

/// Angle of `R_gtᵀ·R_pr` in degrees, in `[0, 180]`.
pub fn rotation_error_deg(r_gt: &Matrix3<f64>, r_pr: &Matrix3<f64>) -> f64 {
    let cos = (((r_gt.transpose() * r_pr).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

/// Angle between two translation directions in degrees.
pub fn translation_angle_deg(t_gt: &Vector3<f64>, t_pr: &Vector3<f64>) -> Result<f64, EvalError> {
    let (ng, np) = (t_gt.norm(), t_pr.norm());
    if ng < 1e-12 || np < 1e-12 {
        return Err(EvalError::ZeroTranslation);
    }
    Ok((t_gt.dot(t_pr) / (ng * np)).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Fraction of `errors` strictly below `threshold_deg`. An error equal to the
/// threshold does not count.
pub fn accuracy_at(errors: &[f64], threshold_deg: f64) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyList);
    }
    if !(threshold_deg > 0.0) {
        return Err(EvalError::InvalidArgument(format!("threshold must be positive, got {threshold_deg}")));
    }
    Ok(errors.iter().filter(|&&e| e < threshold_deg).count() as f64 / errors.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    #[test]
    fn rotation_examples() {
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        assert!(rotation_error_deg(&r, &r).abs() < 1e-6);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians()).into_inner();
        assert!((rotation_error_deg(&r, &(r * rz)) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn translation_examples() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        assert!(translation_angle_deg(&a, &(a * 4.0)).unwrap().abs() < 1e-6);
        assert!((translation_angle_deg(&a, &-a).unwrap() - 180.0).abs() < 1e-6);
        assert!((translation_angle_deg(&Vector3::x(), &Vector3::y()).unwrap() - 90.0).abs() < 1e-12);
        assert!(matches!(translation_angle_deg(&a, &Vector3::zeros()), Err(EvalError::ZeroTranslation)));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_at(&[10.0, 20.0, 14.0, 40.0], 15.0).unwrap(), 0.5);
        assert_eq!(accuracy_at(&[1.0, 2.0], 15.0).unwrap(), 1.0);
        assert_eq!(accuracy_at(&[15.0], 15.0).unwrap(), 0.0);
        assert!(matches!(accuracy_at(&[], 15.0), Err(EvalError::EmptyList)));
        assert!(accuracy_at(&[1.0], 0.0).is_err());
    }

    fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..3.14f64).prop_filter_map("axis", |(x, y, z, a)| {
            let v = Vector3::new(x, y, z);
            (v.norm() > 1e-3).then(|| Rotation3::from_axis_angle(&Unit::new_normalize(v), a).into_inner())
        })
    }

    proptest! {
        #[test]
        fn left_invariant(r in rotation(), x in rotation()) {
            let lhs = rotation_error_deg(&r, &(r * x));
            let rhs = rotation_error_deg(&Matrix3::identity(), &x);
            prop_assert!((lhs - rhs).abs() < 1e-5);
        }

        #[test]
        fn translation_scale_invariant(v in prop::array::uniform3(-5.0..5.0f64), w in prop::array::uniform3(-5.0..5.0f64), s in 0.01..100.0f64, t in 0.01..100.0f64) {
            let (a, b) = (Vector3::from(v), Vector3::from(w));
            prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
            let base = translation_angle_deg(&a, &b).unwrap();
            prop_assert!((translation_angle_deg(&(a * s), &(b * t)).unwrap() - base).abs() < 1e-6);
        }

        #[test]
        fn accuracy_monotone(errors in prop::collection::vec(0.0..180.0f64, 1..40), t1 in 0.1..180.0f64, t2 in 0.1..180.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(accuracy_at(&errors, lo).unwrap() <= accuracy_at(&errors, hi).unwrap());
        }
    }
}
