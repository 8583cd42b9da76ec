use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::{Vector2, Vector3};

use super::{Asset, SynthError};
use crate::geom::{CameraIntrinsics, RigidTransform};
use crate::imgproc::WHITE;

/// Supersampling factor per axis.
const SUPERSAMPLE: usize = 2;
const NEAR: f64 = 1e-3;
const AMBIENT: f32 = 0.45;
const DIFFUSE: f32 = 0.55;

fn light_direction() -> Vector3<f64> {
    Vector3::new(0.35, -0.25, 0.9).normalize()
}

/// Z-buffered flat-lit rendering of `asset` seen through `pose` (object to
/// camera) and `k`. Returns the colour image on white and the coverage mask.
///
/// Rendering is supersampled 2x2 and box-filtered; the mask keeps pixels with
/// at least half of their samples covered.
pub fn render(asset: &Asset, pose: &RigidTransform, k: &CameraIntrinsics) -> Result<(RgbImage, GrayImage), SynthError> {
    let center = pose.camera_center();
    if center.norm() <= 1.0 {
        return Err(SynthError::CameraInsideSphere(center.norm()));
    }
    let ss = SUPERSAMPLE;
    let (w, h) = (k.width as usize * ss, k.height as usize * ss);
    let scale = ss as f64;
    let (fx, fy, cx, cy) = (k.fx * scale, k.fy * scale, k.cx * scale, k.cy * scale);

    let mut color = vec![[f32::from(WHITE); 3]; w * h];
    let mut inv_depth = vec![0.0f64; w * h];
    let light = light_direction();

    for tri in &asset.triangles {
        let cam = tri.vertices.map(|v| pose.transform_point(&v));
        if cam.iter().any(|p| p.z < NEAR) {
            continue;
        }
        // back-face culling against the viewing ray
        let normal_cam = (cam[1] - cam[0]).cross(&(cam[2] - cam[0]));
        if normal_cam.dot(&cam[0]) >= 0.0 {
            continue;
        }
        let shade = AMBIENT + DIFFUSE * (tri.normal().dot(&light).max(0.0) as f32);
        let screen = cam.map(|p| Vector2::new(fx * p.x / p.z + cx, fy * p.y / p.z + cy));
        let area = edge(&screen[0], &screen[1], &screen[2]);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = screen.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = screen.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = screen.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = screen.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max_x - 0.5).floor() as i64).min(w as i64 - 1);
        let y1 = ((max_y - 0.5).floor() as i64).min(h as i64 - 1);
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }
        let inv_z = cam.map(|p| 1.0 / p.z);
        for py in y0..=y1 as usize {
            for px in x0..=x1 as usize {
                let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
                let b0 = edge(&screen[1], &screen[2], &p) / area;
                let b1 = edge(&screen[2], &screen[0], &p) / area;
                let b2 = 1.0 - b0 - b1;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let iz = b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2];
                let idx = py * w + px;
                if iz <= inv_depth[idx] {
                    continue;
                }
                inv_depth[idx] = iz;
                let wts = [b0 * inv_z[0] / iz, b1 * inv_z[1] / iz, b2 * inv_z[2] / iz];
                let mut c = [0.0f32; 3];
                for (ch, out) in c.iter_mut().enumerate() {
                    *out = shade
                        * (wts[0] as f32 * tri.colors[0][ch]
                            + wts[1] as f32 * tri.colors[1][ch]
                            + wts[2] as f32 * tri.colors[2][ch]);
                }
                color[idx] = c;
            }
        }
    }

    let (ow, oh) = (k.width, k.height);
    let mut img = RgbImage::new(ow, oh);
    let mut mask = GrayImage::new(ow, oh);
    let norm = (ss * ss) as f32;
    for y in 0..oh as usize {
        for x in 0..ow as usize {
            let mut acc = [0.0f32; 3];
            let mut covered = 0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let idx = (y * ss + sy) * w + x * ss + sx;
                    for ch in 0..3 {
                        acc[ch] += color[idx][ch];
                    }
                    if inv_depth[idx] > 0.0 {
                        covered += 1;
                    }
                }
            }
            let px = acc.map(|v| (v / norm).round().clamp(0.0, 255.0) as u8);
            img.put_pixel(x as u32, y as u32, Rgb(px));
            if 2 * covered >= ss * ss {
                mask.put_pixel(x as u32, y as u32, Luma([255]));
            }
        }
    }
    Ok((img, mask))
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{look_at_pose, SphericalViewpoint};
    use crate::imgproc::{mask_area, mask_bbox};
    use crate::synth::make_asset;

    fn centroid(mask: &GrayImage) -> (f64, f64) {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for (x, y, p) in mask.enumerate_pixels() {
            if p[0] > 0 {
                sx += f64::from(x);
                sy += f64::from(y);
                n += 1.0;
            }
        }
        (sx / n, sy / n)
    }

    #[test]
    fn camera_inside_sphere_rejected() {
        let asset = make_asset(0);
        let pose = look_at_pose(&SphericalViewpoint::new(0.0, 10.0, 0.0, 0.9));
        let k = CameraIntrinsics::square(100.0, 64).unwrap();
        assert!(matches!(render(&asset, &pose, &k), Err(SynthError::CameraInsideSphere(_))));
    }

    #[test]
    fn deterministic() {
        let asset = make_asset(2);
        let pose = look_at_pose(&SphericalViewpoint::new(30.0, 20.0, 5.0, 2.5));
        let k = CameraIntrinsics::square(150.0, 96).unwrap();
        assert_eq!(render(&asset, &pose, &k).unwrap(), render(&asset, &pose, &k).unwrap());
    }

    #[test]
    fn object_roughly_inscribes_the_view() {
        let asset = make_asset(4);
        let kv = CameraIntrinsics::square(2f64.sqrt() * 64.0 * 1.3, 128).unwrap();
        let d = crate::geom::distance_for_inscribed_sphere(&kv);
        let pose = look_at_pose(&SphericalViewpoint::new(100.0, 30.0, 0.0, d));
        let (img, mask) = render(&asset, &pose, &kv).unwrap();
        let (x0, y0, x1, y1) = mask_bbox(&mask).unwrap();
        // The hull reaches the unit sphere along its long axis only, so one
        // extent nearly fills the view while the other may fall short.
        assert!((x1 - x0).max(y1 - y0) > 100, "{:?}", (x0, y0, x1, y1));
        assert!((x1 - x0).min(y1 - y0) > 64, "{:?}", (x0, y0, x1, y1));
        assert!(mask_area(&mask) > 5000);
        // background stays white
        assert_eq!(*img.get_pixel(0, 0), Rgb([255, 255, 255]));
    }

    #[test]
    fn opposite_azimuth_masks_differ() {
        let asset = make_asset(0);
        let k = CameraIntrinsics::square(200.0, 128).unwrap();
        let a = render(&asset, &look_at_pose(&SphericalViewpoint::new(15.0, 10.0, 0.0, 3.0)), &k).unwrap().1;
        let b = render(&asset, &look_at_pose(&SphericalViewpoint::new(195.0, 10.0, 0.0, 3.0)), &k).unwrap().1;
        let (ca, cb) = (centroid(&a), centroid(&b));
        assert!(a != b);
        assert!((ca.0 - cb.0).abs() + (ca.1 - cb.1).abs() > 0.5, "{ca:?} {cb:?}");
    }
}
