use std::collections::HashMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Icosphere subdivision depth of procedural assets (1280 faces).
const SUBDIVISIONS: usize = 3;
/// Elongation of the egg-shaped hull along its random axis.
const ELONGATION: f64 = 0.35;
/// Number, height and angular width (radians) of the smooth bumps added to
/// the hull.
const BUMPS: usize = 3;
const BUMP_HEIGHT: f64 = 0.2;
const BUMP_WIDTH: f64 = 0.45;
/// Per-facet brightness variation around the colour of its icosahedron face.
const FACET_VARIATION: f32 = 0.15;
/// Radial jitter applied per shared vertex.
const JITTER: f64 = 0.02;
/// Largest vertex radius after normalization; keeps the hull strictly inside
/// the unit sphere.
const MAX_RADIUS: f64 = 0.999;
/// Colour of the marker face.
pub const MARKER_COLOR: [f32; 3] = [230.0, 16.0, 16.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    /// Counter-clockwise when seen from outside the hull.
    pub vertices: [Vector3<f64>; 3],
    /// Linear RGB in `[0, 255]` per vertex.
    pub colors: [[f32; 3]; 3],
}

impl Triangle {
    pub fn normal(&self) -> Vector3<f64> {
        let [a, b, c] = &self.vertices;
        (b - a).cross(&(c - a)).normalize()
    }
}

/// Closed, textured triangle mesh inside the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub triangles: Vec<Triangle>,
    pub seed: u64,
    /// Index of the high-contrast marker face.
    pub marker: usize,
}

impl Asset {
    pub fn max_radius(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| t.vertices.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

fn icosphere(subdivisions: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Procedural egg-shaped polyhedron with per-face colours and one marker face.
///
/// The hull is elongated along a random axis and carries a few smooth bumps,
/// so opposite viewpoints produce distinguishable silhouettes. Facets take
/// the colour of the icosahedron face they descend from, varied slightly in
/// brightness, which leaves structure visible at thumbnail scale.
pub fn make_asset(seed: u64) -> Asset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a55e_7000_0000);
    let (unit_verts, faces) = icosphere(SUBDIVISIONS);
    let axis = random_unit(&mut rng);
    let bumps: Vec<Vector3<f64>> = (0..BUMPS).map(|_| random_unit(&mut rng)).collect();
    let mut verts: Vec<Vector3<f64>> = unit_verts
        .iter()
        .map(|v| {
            let bump: f64 = bumps
                .iter()
                .map(|b| BUMP_HEIGHT * (-(v.dot(b).clamp(-1.0, 1.0).acos() / BUMP_WIDTH).powi(2)).exp())
                .sum();
            let stretch = 1.0 + ELONGATION * v.dot(&axis).max(0.0) + bump;
            let jitter = 1.0 + rng.gen_range(-JITTER..JITTER);
            v * stretch * jitter
        })
        .collect();
    let scale = MAX_RADIUS / verts.iter().map(|v| v.norm()).fold(0.0, f64::max);
    verts.iter_mut().for_each(|v| *v *= scale);

    let marker = faces
        .iter()
        .enumerate()
        .map(|(i, f)| (i, (verts[f[0]] + verts[f[1]] + verts[f[2]]).normalize().dot(&axis)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0;

    // Subdivision keeps the children of a face contiguous, so `i / per_root`
    // is the icosahedron face a facet descends from.
    let per_root = 4usize.pow(SUBDIVISIONS as u32);
    let root_colors: Vec<[f32; 3]> = (0..faces.len() / per_root)
        .map(|_| [rng.gen_range(30.0..225.0f32), rng.gen_range(30.0..225.0f32), rng.gen_range(30.0..225.0f32)])
        .collect();
    let triangles = faces
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut vertices = [verts[f[0]], verts[f[1]], verts[f[2]]];
            let centroid = (vertices[0] + vertices[1] + vertices[2]) / 3.0;
            if (vertices[1] - vertices[0]).cross(&(vertices[2] - vertices[0])).dot(&centroid) < 0.0 {
                vertices.swap(1, 2);
            }
            let colors = if i == marker {
                [MARKER_COLOR; 3]
            } else {
                let shade: f32 = 1.0 + rng.gen_range(-FACET_VARIATION..FACET_VARIATION);
                let base = root_colors[i / per_root].map(|c| c * shade);
                let mut corner = || {
                    let k: f32 = rng.gen_range(0.95..1.05);
                    base.map(|c| (c * k).min(235.0))
                };
                [corner(), corner(), corner()]
            };
            Triangle { vertices, colors }
        })
        .collect();
    Asset { triangles, seed, marker }
}
