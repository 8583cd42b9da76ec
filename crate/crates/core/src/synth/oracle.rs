use std::sync::Arc;

use image::RgbImage;
use nalgebra::Vector3;
use rayon::prelude::*;

use super::{render, Asset, SynthError};
use crate::geom::{look_at_pose, wrap_deg_pm180, CameraIntrinsics, RigidTransform, SphericalViewpoint, VirtualView};
use crate::imgproc::{ncc, resize_area, rotate_gray, to_gray, GrayF32};
use crate::viewgen::{check_output, GeneratorFailure, GeneratorProvider, SharedGenerator, ViewGenerator, ViewRequest};

const COARSE_SIZE: usize = 64;
const FINE_SIZE: usize = 128;
const COARSE_STEP_DEG: f64 = 2.0;
const FINE_STEP_DEG: f64 = 0.1;
const FINE_HALF_RANGE_DEG: f64 = 2.5;

/// Generator backend that re-renders a known asset.
///
/// The oracle is bound to one reference image, the first virtual view of a
/// pair, whose true viewpoint it knows. Like a learned generator it treats
/// the azimuth and elevation deltas as rotations about the object's up axis
/// and keeps the camera roll it sees in the request image. That roll is read
/// off the request by matching it against rotated copies of an upright render
/// of the reference viewpoint, so a badly rectified request produces views
/// that are rolled consistently with it, not views about the right axis.
#[derive(Debug, Clone)]
pub struct OracleGenerator {
    asset: Arc<Asset>,
    reference: SphericalViewpoint,
    pivot: Vector3<f64>,
    intrinsics: CameraIntrinsics,
    upright_coarse: GrayF32,
    upright_fine: GrayF32,
}

impl OracleGenerator {
    /// `reference` is the true viewpoint of the reference image, `k_v` its
    /// square intrinsics.
    pub fn new(asset: Arc<Asset>, reference: SphericalViewpoint, k_v: CameraIntrinsics) -> Result<Self, SynthError> {
        Self::with_pivot(asset, reference, Vector3::zeros(), k_v)
    }

    /// Like [`OracleGenerator::new`], with viewpoints measured around
    /// `pivot` instead of the object origin.
    pub fn with_pivot(
        asset: Arc<Asset>,
        reference: SphericalViewpoint,
        pivot: Vector3<f64>,
        k_v: CameraIntrinsics,
    ) -> Result<Self, SynthError> {
        if k_v.width != k_v.height {
            return Err(SynthError::InvalidArgument("oracle intrinsics must be square".into()));
        }
        let mut oracle = Self {
            upright_coarse: GrayF32::new(0, 0),
            upright_fine: GrayF32::new(0, 0),
            asset,
            reference,
            pivot,
            intrinsics: k_v,
        };
        let gray = to_gray(&oracle.render_shifted(0.0, 0.0, 0.0, k_v.width)?);
        oracle.upright_coarse = resize_area(&gray, COARSE_SIZE);
        oracle.upright_fine = resize_area(&gray, FINE_SIZE);
        Ok(oracle)
    }

    /// Builds the oracle from the true object-to-camera pose of the reference
    /// image.
    ///
    /// A generator conditioned on an object-centric crop orbits the point
    /// the crop is centered on. The oracle therefore pivots about the point
    /// of the optical axis closest to the object origin; azimuth, elevation
    /// and distance are those of the camera center around that pivot, and
    /// the roll is the residual rotation about the optical axis.
    pub fn from_pose(asset: Arc<Asset>, object_to_camera: &RigidTransform, k_v: CameraIntrinsics) -> Result<Self, SynthError> {
        let center = object_to_camera.camera_center();
        let forward: Vector3<f64> = object_to_camera.rotation.row(2).transpose();
        let depth = -center.dot(&forward);
        if center.norm() <= 1.0 || depth <= 1.0 {
            return Err(SynthError::CameraInsideSphere(center.norm().min(depth)));
        }
        let pivot = center + forward * depth;
        let c = center - pivot;
        let distance = c.norm();
        let azimuth = if c.x.hypot(c.y) > 1e-12 { c.y.atan2(c.x).to_degrees() } else { 0.0 };
        let elevation = (c.z / distance).clamp(-1.0, 1.0).asin().to_degrees();
        let base = look_at_pose(&SphericalViewpoint::new(azimuth, elevation, 0.0, distance)).rotation;
        let residual = object_to_camera.rotation * base.transpose();
        let roll = residual[(1, 0)].atan2(residual[(0, 0)]).to_degrees();
        Self::with_pivot(asset, SphericalViewpoint::new(azimuth, elevation, roll, distance), pivot, k_v)
    }

    /// True viewpoint of the reference image.
    pub fn reference(&self) -> &SphericalViewpoint {
        &self.reference
    }

    /// Center of the orbit, in object coordinates.
    pub fn pivot(&self) -> &Vector3<f64> {
        &self.pivot
    }

    /// Object-to-camera pose of a viewpoint measured around the pivot.
    pub fn pose_of(&self, vp: &SphericalViewpoint) -> RigidTransform {
        let around = look_at_pose(vp);
        RigidTransform::new(around.rotation, around.translation - around.rotation * self.pivot)
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    /// Roll of `image` relative to the upright reference, degrees.
    pub fn estimate_roll(&self, image: &RgbImage) -> f64 {
        let gray = to_gray(image);
        let coarse = resize_area(&gray, COARSE_SIZE);
        let fine = resize_area(&gray, FINE_SIZE);
        let score = |thumb: &GrayF32, target: &GrayF32, angle: f64| ncc(&rotate_gray(thumb, angle, 255.0), target, None);

        let steps = (360.0 / COARSE_STEP_DEG) as usize;
        let (mut best, mut best_score) = (0.0, f64::NEG_INFINITY);
        for i in 0..steps {
            let angle = -180.0 + i as f64 * COARSE_STEP_DEG;
            let s = score(&self.upright_coarse, &coarse, angle);
            if s > best_score {
                (best, best_score) = (angle, s);
            }
        }
        let n = (FINE_HALF_RANGE_DEG / FINE_STEP_DEG).round() as i64;
        let fine_scores: Vec<(f64, f64)> = (-n..=n)
            .map(|k| {
                let angle = best + k as f64 * FINE_STEP_DEG;
                (angle, score(&self.upright_fine, &fine, angle))
            })
            .collect();
        let (i, &(angle, s0)) = fine_scores
            .iter()
            .enumerate()
            .fold((0, &fine_scores[0]), |acc, cur| if cur.1 .1 > acc.1 .1 { cur } else { acc });
        let mut roll = angle;
        if i > 0 && i + 1 < fine_scores.len() {
            let (sm, sp) = (fine_scores[i - 1].1, fine_scores[i + 1].1);
            let curvature = sm - 2.0 * s0 + sp;
            if curvature < 0.0 {
                roll += 0.5 * FINE_STEP_DEG * (sm - sp) / curvature;
            }
        }
        wrap_deg_pm180(roll)
    }

    fn intrinsics_for(&self, size: u32) -> CameraIntrinsics {
        if size == self.intrinsics.width {
            return self.intrinsics;
        }
        let scale = f64::from(size) / f64::from(self.intrinsics.width);
        CameraIntrinsics {
            fx: self.intrinsics.fx * scale,
            fy: self.intrinsics.fy * scale,
            cx: f64::from(size) / 2.0,
            cy: f64::from(size) / 2.0,
            width: size,
            height: size,
        }
    }

    /// Renders the reference viewpoint shifted by `(d_azimuth, d_elevation)`
    /// with the given roll, at `size x size`. Elevations past the pole
    /// continue over the top.
    pub fn render_shifted(&self, d_azimuth_deg: f64, d_elevation_deg: f64, roll_deg: f64, size: u32) -> Result<RgbImage, SynthError> {
        let vp = SphericalViewpoint {
            elevation_deg: self.reference.elevation_deg + d_elevation_deg,
            ..SphericalViewpoint::new(self.reference.azimuth_deg + d_azimuth_deg, 0.0, roll_deg, self.reference.distance)
        };
        Ok(render(&self.asset, &self.pose_of(&vp), &self.intrinsics_for(size))?.0)
    }
}

impl ViewGenerator for OracleGenerator {
    fn generate(&self, request: &ViewRequest) -> Result<Vec<RgbImage>, GeneratorFailure> {
        request.validate()?;
        let roll = self.estimate_roll(&request.image);
        let size = request.image.width();
        let images = request
            .deltas
            .par_iter()
            .map(|d| self.render_shifted(d.azimuth_deg, d.elevation_deg, roll, size))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GeneratorFailure::Backend(e.to_string()))?;
        check_output(request, &images)?;
        Ok(images)
    }
}

/// Hands out an [`OracleGenerator`] for the first view of a pair whose
/// world-to-camera pose and asset are known.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    asset: Arc<Asset>,
    world_to_camera: RigidTransform,
}

impl OracleProvider {
    /// The world frame must be the asset's object frame.
    pub fn new(asset: Arc<Asset>, world_to_camera: RigidTransform) -> Self {
        Self { asset, world_to_camera }
    }

    /// True object-to-virtual-camera pose of `view`.
    pub fn virtual_pose(&self, view: &VirtualView) -> RigidTransform {
        view.rotation.compose(&self.world_to_camera)
    }

    pub fn oracle_for(&self, view: &VirtualView) -> Result<OracleGenerator, SynthError> {
        OracleGenerator::from_pose(self.asset.clone(), &self.virtual_pose(view), view.intrinsics)
    }
}

impl GeneratorProvider for OracleProvider {
    fn generator_for(&self, first_view: &VirtualView) -> Result<SharedGenerator, GeneratorFailure> {
        let oracle = self.oracle_for(first_view).map_err(|e| GeneratorFailure::Backend(e.to_string()))?;
        Ok(Arc::new(oracle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::distance_for_inscribed_sphere;
    use crate::synth::make_asset;
    use crate::viewgen::ViewDelta;
    use crate::viewsphere::delta_views;

    fn kv() -> CameraIntrinsics {
        CameraIntrinsics::square(2f64.sqrt() * 64.0 * 1.2, 128).unwrap()
    }

    #[test]
    fn generate_matches_direct_render() {
        let asset = Arc::new(make_asset(11));
        let k = kv();
        let d = distance_for_inscribed_sphere(&k);
        let reference = SphericalViewpoint::new(40.0, 25.0, 0.0, d);
        let oracle = OracleGenerator::new(asset.clone(), reference, k).unwrap();
        let input = render(&asset, &look_at_pose(&reference), &k).unwrap().0;
        let targets = [SphericalViewpoint::new(100.0, 50.0, 0.0, d), SphericalViewpoint::new(300.0, 5.0, 0.0, d)];
        let deltas: Vec<ViewDelta> = delta_views(&reference, &targets).into_iter().map(ViewDelta::from).collect();
        let out = oracle.generate(&ViewRequest::new(input, deltas, 50, 0).unwrap()).unwrap();
        for (img, t) in out.iter().zip(&targets) {
            let direct = render(&asset, &look_at_pose(t), &k).unwrap().0;
            assert!(ncc(&to_gray(img), &to_gray(&direct), None) > 0.999);
        }
    }

    #[test]
    fn roll_is_read_from_the_request() {
        let asset = Arc::new(make_asset(5));
        let k = kv();
        let d = distance_for_inscribed_sphere(&k);
        let oracle = OracleGenerator::new(asset.clone(), SphericalViewpoint::new(200.0, 35.0, 0.0, d), k).unwrap();
        for roll in [-37.3, 0.0, 12.0, 44.0] {
            let img = render(&asset, &look_at_pose(&SphericalViewpoint::new(200.0, 35.0, roll, d)), &k).unwrap().0;
            let est = oracle.estimate_roll(&img);
            assert!((est - roll).abs() < 0.5, "{roll} vs {est}");
        }
    }

    #[test]
    fn from_pose_recovers_viewpoint() {
        let asset = Arc::new(make_asset(1));
        let vp = SphericalViewpoint::new(123.0, 17.0, -8.0, 3.0);
        let oracle = OracleGenerator::from_pose(asset, &look_at_pose(&vp), kv()).unwrap();
        let r = oracle.reference();
        assert!((r.azimuth_deg - 123.0).abs() < 1e-9);
        assert!((r.elevation_deg - 17.0).abs() < 1e-9);
        assert!((r.inplane_deg + 8.0).abs() < 1e-9);
        assert!((r.distance - 3.0).abs() < 1e-12);
    }
}
