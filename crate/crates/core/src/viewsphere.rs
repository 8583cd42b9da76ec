//! Reference viewpoints on the upper hemisphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{wrap_delta_deg, SphericalViewpoint};

/// Golden angle in degrees, `180 (3 - sqrt 5)`.
const GOLDEN_ANGLE_DEG: f64 = 137.507_764_050_037_85;

/// Ordered set of viewpoints sharing one camera distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointSet {
    pub viewpoints: Vec<SphericalViewpoint>,
    pub seed: u64,
}

impl ViewpointSet {
    pub fn len(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SphericalViewpoint> {
        self.viewpoints.iter()
    }
}

/// Fibonacci lattice on the upper hemisphere.
///
/// Sample `k` sits at height `z = (k + 1/2) / n` with azimuth `k` times the
/// golden angle, which gives equal-area strata and elevations in `(0°, 90°)`.
pub fn sample_upper_hemisphere(n: usize, distance: f64, inplane_deg: f64) -> ViewpointSet {
    sample_upper_hemisphere_seeded(n, distance, inplane_deg, 0)
}

/// Same lattice, rotated about the up axis by a seed-derived azimuth offset.
/// Seed 0 leaves the lattice unrotated.
pub fn sample_upper_hemisphere_seeded(n: usize, distance: f64, inplane_deg: f64, seed: u64) -> ViewpointSet {
    let offset = if seed == 0 { 0.0 } else { ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..360.0) };
    let viewpoints = (0..n)
        .map(|k| {
            let z = (k as f64 + 0.5) / n as f64;
            let elevation = z.asin().to_degrees();
            let azimuth = offset + k as f64 * GOLDEN_ANGLE_DEG;
            SphericalViewpoint::new(azimuth, elevation, inplane_deg, distance)
        })
        .collect();
    ViewpointSet { viewpoints, seed }
}

/// `(Δazimuth, Δelevation)` from `reference` to each target, azimuth wrapped
/// into `(-180, 180]`.
pub fn delta_views(reference: &SphericalViewpoint, targets: &[SphericalViewpoint]) -> Vec<(f64, f64)> {
    targets
        .iter()
        .map(|t| {
            (
                wrap_delta_deg(t.azimuth_deg - reference.azimuth_deg),
                t.elevation_deg - reference.elevation_deg,
            )
        })
        .collect()
}

/// Great-circle angle between the viewing directions of two viewpoints, radians.
pub fn angular_separation(a: &SphericalViewpoint, b: &SphericalViewpoint) -> f64 {
    a.direction().dot(&b.direction()).clamp(-1.0, 1.0).acos()
}
