use nalgebra::{Matrix3, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{se3_exp, Edge, EdgeKind, PoseGraph};
use crate::geom::RigidTransform;

const RADIUS: f64 = 5.0;
/// Systematic heading error per odometry step, radians.
const YAW_BIAS: f64 = 0.03;
const ROTATION_NOISE: f64 = 0.003;
const TRANSLATION_NOISE: f64 = 0.01;

/// A camera driving once around a circle with drifting odometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSimulation {
    pub ground_truth: Vec<RigidTransform>,
    /// Odometry edges only, nodes initialized by chaining them from the true
    /// first pose.
    pub graph: PoseGraph,
}

impl LoopSimulation {
    /// Rotation-only closure between two nodes, measured exactly.
    pub fn exact_closure(&self, i: usize, j: usize, weight: f64) -> Edge {
        let gt = &self.ground_truth;
        Edge { i, j, measurement: gt[i].compose(&gt[j].inverse()), kind: EdgeKind::ClosureRotationOnly, weight }
    }

    /// Root mean square distance between estimated and true camera centers.
    pub fn rms_position_error(&self, nodes: &[RigidTransform]) -> f64 {
        let sum: f64 = nodes
            .iter()
            .zip(&self.ground_truth)
            .map(|(a, b)| (a.camera_center() - b.camera_center()).norm_squared())
            .sum();
        (sum / nodes.len() as f64).sqrt()
    }
}

fn circle_pose(k: usize, n: usize) -> RigidTransform {
    let phi = std::f64::consts::TAU * k as f64 / n as f64;
    let center = Vector3::new(RADIUS * phi.cos(), RADIUS * phi.sin(), 0.0);
    let forward = Vector3::new(-phi.sin(), phi.cos(), 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let right = down.cross(&forward);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    RigidTransform::new(rotation, -(rotation * center))
}

/// `nodes` poses on a circle, joined by odometry edges `(k, k+1)` whose
/// rotations carry a constant heading bias plus noise.
pub fn drifting_loop(nodes: usize, seed: u64) -> LoopSimulation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = Normal::new(0.0, ROTATION_NOISE).expect("valid sigma");
    let trans = Normal::new(0.0, TRANSLATION_NOISE).expect("valid sigma");
    let ground_truth: Vec<RigidTransform> = (0..nodes).map(|k| circle_pose(k, nodes)).collect();
    let mut graph = PoseGraph::new(vec![ground_truth[0]]);
    for k in 0..nodes.saturating_sub(1) {
        let exact = ground_truth[k].compose(&ground_truth[k + 1].inverse());
        // camera y points down, so a heading error is a rotation about y
        let noise = Vector6::new(
            trans.sample(&mut rng),
            trans.sample(&mut rng),
            trans.sample(&mut rng),
            rot.sample(&mut rng),
            YAW_BIAS + rot.sample(&mut rng),
            rot.sample(&mut rng),
        );
        let measurement = se3_exp(&noise).compose(&exact);
        let next = measurement.inverse().compose(&graph.nodes[k]);
        graph.nodes.push(next);
        graph.add_edge(Edge { i: k, j: k + 1, measurement, kind: EdgeKind::Odometry, weight: 1.0 });
    }
    LoopSimulation { ground_truth, graph }
}
