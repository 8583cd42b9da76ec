use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{make_asset, render, SynthError};
use crate::geom::{CameraIntrinsics, RigidTransform};

pub const MANIFEST_VERSION: &str = "xpose-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Parameters of a synthetic pair dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub pairs: usize,
    pub seed: u64,
    pub min_separation_deg: f64,
    /// Random roll in `[-45, 45]` degrees about each optical axis.
    pub inplane_jitter: bool,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub min_distance: f64,
    pub max_distance: f64,
    pub max_elevation_deg: f64,
    /// Radius of the random look-at offset around the object center.
    pub max_target_offset: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            pairs: 1,
            seed: 0,
            min_separation_deg: 0.0,
            inplane_jitter: true,
            width: 480,
            height: 360,
            focal: 320.0,
            min_distance: 2.8,
            max_distance: 3.6,
            max_elevation_deg: 60.0,
            max_target_offset: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidArgument(m));
        if !(0.0..=180.0).contains(&self.min_separation_deg) {
            return bad(format!("min separation {} outside [0, 180]", self.min_separation_deg));
        }
        if !(self.min_distance > 1.0 && self.max_distance >= self.min_distance) {
            return bad(format!("distance range [{}, {}] must lie outside the unit sphere", self.min_distance, self.max_distance));
        }
        if !(0.0..90.0).contains(&self.max_elevation_deg) {
            return bad(format!("max elevation {} outside [0, 90)", self.max_elevation_deg));
        }
        if !(self.max_target_offset >= 0.0 && self.max_target_offset < self.min_distance - 1.0) {
            return bad(format!("target offset {} too large", self.max_target_offset));
        }
        CameraIntrinsics::new(self.focal, self.focal, self.width as f64 / 2.0, self.height as f64 / 2.0, self.width, self.height)?;
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticView {
    pub image: RgbImage,
    pub mask: GrayImage,
    pub intrinsics: CameraIntrinsics,
    /// World (object) to camera.
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub id: String,
    pub asset_seed: u64,
    pub views: [SyntheticView; 2],
}

impl SyntheticPair {
    /// Camera 1 to camera 2.
    pub fn relative(&self) -> RigidTransform {
        self.views[1].pose.compose(&self.views[0].pose.inverse())
    }
}

fn pair_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn sample_direction(rng: &mut ChaCha8Rng, max_elevation_deg: f64) -> Vector3<f64> {
    let az = rng.gen_range(0.0..360.0f64).to_radians();
    let el = rng.gen_range(0.0..=max_elevation_deg).to_radians();
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Camera at `center` looking at `target` with `+z` up, rolled by `roll_deg`.
fn look_at(center: &Vector3<f64>, target: &Vector3<f64>, roll_deg: f64) -> RigidTransform {
    let forward = (target - center).normalize();
    let right = forward.cross(&Vector3::z()).normalize();
    let down = forward.cross(&right);
    let base = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let rotation = crate::geom::rot_z(roll_deg.to_radians()) * base;
    RigidTransform::new(rotation, -(rotation * center))
}

/// Renders pair `index` of the dataset described by `cfg`. Pairs are
/// independent of each other and of `cfg.pairs`.
pub fn synth_pair(cfg: &DatasetConfig, index: usize) -> Result<SyntheticPair, SynthError> {
    cfg.validate()?;
    let mut rng = pair_rng(cfg.seed, index);
    let asset_seed: u64 = rng.gen();
    let asset = make_asset(asset_seed);
    let min_cos = cfg.min_separation_deg.to_radians().cos();

    let d1 = sample_direction(&mut rng, cfg.max_elevation_deg);
    let mut d2 = None;
    for _ in 0..100_000 {
        let cand = sample_direction(&mut rng, cfg.max_elevation_deg);
        if d1.dot(&cand) <= min_cos + 1e-12 {
            d2 = Some(cand);
            break;
        }
    }
    let d2 = d2.ok_or_else(|| {
        SynthError::InvalidArgument(format!(
            "no viewpoint pair with separation {} deg below elevation {}",
            cfg.min_separation_deg, cfg.max_elevation_deg
        ))
    })?;

    let k = cfg.intrinsics();
    let mut view = |dir: Vector3<f64>| -> Result<SyntheticView, SynthError> {
        let distance = rng.gen_range(cfg.min_distance..=cfg.max_distance);
        let offset = loop {
            let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if v.norm_squared() <= 1.0 {
                break v * cfg.max_target_offset;
            }
        };
        let roll = if cfg.inplane_jitter { rng.gen_range(-45.0..=45.0) } else { 0.0 };
        let pose = look_at(&(dir * distance), &offset, roll);
        let (image, mask) = render(&asset, &pose, &k)?;
        Ok(SyntheticView { image, mask, intrinsics: k, pose })
    };
    let v1 = view(d1)?;
    let v2 = view(d2)?;
    Ok(SyntheticPair { id: format!("pair_{index:04}"), asset_seed, views: [v1, v2] })
}

/// Row-major rotation and translation of a rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for PoseRecord {
    fn from(t: &RigidTransform) -> Self {
        let r = &t.rotation;
        Self {
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl PoseRecord {
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(Matrix3::from_row_slice(&self.rotation), Vector3::from_row_slice(&self.translation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub image: String,
    pub mask: String,
    pub intrinsics: CameraIntrinsics,
    #[serde(flatten)]
    pub pose: PoseRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Seed of the procedural asset, when the pair is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_seed: Option<u64>,
    pub views: [ViewRecord; 2],
    pub relative_rotation: [f64; 9],
    pub relative_translation: [f64; 3],
}

impl ManifestEntry {
    pub fn pose(&self, view: usize) -> RigidTransform {
        self.views[view].pose.to_transform()
    }

    pub fn relative(&self) -> RigidTransform {
        PoseRecord { rotation: self.relative_rotation, translation: self.relative_translation }.to_transform()
    }

    /// Loads image and mask of `view` with paths resolved against `base`.
    pub fn load_view(&self, base: &Path, view: usize) -> Result<SyntheticView, SynthError> {
        let rec = &self.views[view];
        let image = read_image(&base.join(&rec.image))?.to_rgb8();
        let mask = read_image(&base.join(&rec.mask))?.to_luma8();
        Ok(SyntheticView { image, mask, intrinsics: rec.intrinsics, pose: rec.pose.to_transform() })
    }
}

fn read_image(path: &Path) -> Result<image::DynamicImage, SynthError> {
    image::open(path).map_err(|e| SynthError::Image { path: path.to_owned(), message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io { path: path.to_owned(), source })?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| SynthError::Manifest(format!("{}: {e}", path.display())))?;
        manifest.check_poses()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| SynthError::Manifest(e.to_string()))?;
        fs::write(path, text).map_err(|source| SynthError::Io { path: path.to_owned(), source })
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Version, pose validity and unique ids.
    pub fn check_poses(&self) -> Result<(), SynthError> {
        if self.version != MANIFEST_VERSION {
            return Err(SynthError::Manifest(format!("unsupported version {:?}", self.version)));
        }
        let mut ids = std::collections::HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(SynthError::Manifest(format!("duplicate id {}", e.id)));
            }
            let poses = [e.pose(0), e.pose(1), e.relative()];
            if let Some(bad) = poses.iter().find(|p| !p.is_valid(1e-6)) {
                return Err(SynthError::Manifest(format!(
                    "entry {}: pose is not a rigid transform (orthonormality error {:e})",
                    e.id,
                    bad.orthonormality_error()
                )));
            }
        }
        Ok(())
    }

    /// Everything in [`Self::check_poses`] plus existence of every referenced file.
    pub fn validate(&self, base: &Path) -> Result<(), SynthError> {
        self.check_poses()?;
        for e in &self.entries {
            for v in &e.views {
                for f in [&v.image, &v.mask] {
                    if !base.join(f).is_file() {
                        return Err(SynthError::Manifest(format!("entry {}: missing file {f}", e.id)));
                    }
                }
            }
        }
        Ok(())
    }
}

fn write_png<P: image::PixelWithColorType>(img: &image::ImageBuffer<P, Vec<P::Subpixel>>, path: &Path) -> Result<(), SynthError>
where
    P: image::Pixel,
    [P::Subpixel]: image::EncodableLayout,
{
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| SynthError::Image { path: path.to_owned(), message: e.to_string() })
}

/// Renders `cfg.pairs` pairs into `out_dir` and writes `manifest.json` there.
/// Returns the manifest; file paths inside it are relative to `out_dir`.
pub fn gen_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest, SynthError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| SynthError::Io { path: out_dir.to_owned(), source })?;
    let mut entries = Vec::with_capacity(cfg.pairs);
    for index in 0..cfg.pairs {
        let pair = synth_pair(cfg, index)?;
        let mut records = Vec::with_capacity(2);
        for (view, tag) in pair.views.iter().zip(["a", "b"]) {
            let image = format!("{}_{tag}.png", pair.id);
            let mask = format!("{}_{tag}_mask.png", pair.id);
            write_png(&view.image, &out_dir.join(&image))?;
            write_png(&view.mask, &out_dir.join(&mask))?;
            records.push(ViewRecord { image, mask, intrinsics: view.intrinsics, pose: PoseRecord::from(&view.pose) });
        }
        let rel = PoseRecord::from(&pair.relative());
        let views: [ViewRecord; 2] = records.try_into().expect("two views");
        entries.push(ManifestEntry {
            id: pair.id,
            asset_seed: Some(pair.asset_seed),
            views,
            relative_rotation: rel.rotation,
            relative_translation: rel.translation,
        });
    }
    let manifest = DatasetManifest { version: MANIFEST_VERSION.into(), entries };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Directory containing a manifest file, used to resolve its relative paths.
pub fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_owned).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig { width: 96, height: 72, focal: 64.0, ..DatasetConfig::default() }
    }

    #[test]
    fn pair_separation_and_relative_pose() {
        let cfg = DatasetConfig { min_separation_deg: 120.0, ..small() };
        for i in 0..5 {
            let pair = synth_pair(&cfg, i).unwrap();
            let (c1, c2) = (pair.views[0].pose.camera_center(), pair.views[1].pose.camera_center());
            let sep = (c1.normalize().dot(&c2.normalize())).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(sep >= 120.0 - 1e-9, "{sep}");
            let rel = pair.relative();
            assert!(rel.is_valid(1e-9));
            let composed = rel.compose(&pair.views[0].pose);
            assert!((composed.rotation - pair.views[1].pose.rotation).abs().max() < 1e-12);
            assert!(pair.views.iter().all(|v| crate::imgproc::mask_area(&v.mask) > 100));
        }
    }

    #[test]
    fn object_stays_inside_the_frame() {
        let cfg = DatasetConfig { pairs: 8, seed: 3, ..DatasetConfig::default() };
        for i in 0..cfg.pairs {
            for v in synth_pair(&cfg, i).unwrap().views {
                let (x0, y0, x1, y1) = crate::imgproc::mask_bbox(&v.mask).unwrap();
                assert!(x0 > 0 && y0 > 0 && x1 < cfg.width - 1 && y1 < cfg.height - 1);
            }
        }
    }

    #[test]
    fn pairs_do_not_depend_on_count() {
        let a = DatasetConfig { pairs: 1, ..small() };
        let b = DatasetConfig { pairs: 7, ..small() };
        assert_eq!(synth_pair(&a, 0).unwrap(), synth_pair(&b, 0).unwrap());
        assert_ne!(synth_pair(&a, 0).unwrap().asset_seed, synth_pair(&a, 1).unwrap().asset_seed);
    }

    #[test]
    fn rejects_bad_separation() {
        let cfg = DatasetConfig { min_separation_deg: 181.0, ..small() };
        assert!(matches!(synth_pair(&cfg, 0), Err(SynthError::InvalidArgument(_))));
    }

    #[test]
    fn dataset_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig { pairs: 2, seed: 9, min_separation_deg: 90.0, ..small() };
        let manifest = gen_dataset(&cfg, dir.path()).unwrap();
        let loaded = DatasetManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest, loaded);
        loaded.validate(dir.path()).unwrap();
        let view = loaded.entries[1].load_view(dir.path(), 1).unwrap();
        assert_eq!(view, synth_pair(&cfg, 1).unwrap().views[1]);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(json["version"], MANIFEST_VERSION);
        assert_eq!(json["entries"][0]["views"][0]["rotation"].as_array().unwrap().len(), 9);
    }

    #[test]
    fn load_rejects_non_rigid_pose() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = gen_dataset(&DatasetConfig { pairs: 1, ..small() }, dir.path()).unwrap();
        manifest.entries[0].views[0].pose.rotation[0] = 2.0;
        let path = dir.path().join("bad.json");
        manifest.save(&path).unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(SynthError::Manifest(_))));
    }
}
