//! SE(3) pose graphs with loop closures, optimized by Levenberg-Marquardt.
//!
//! Nodes hold world-to-camera poses `T_i`. The measurement `Z` of an edge
//! `(i, j)` predicts `T_i · T_j⁻¹`, the transform from camera `j` to camera
//! `i`, and the edge residual is `log(Z⁻¹ · T_i · T_j⁻¹)`.

mod io;
mod lie;
mod sim;

pub use io::{read_graph, write_graph};
pub use lie::{se3_exp, se3_log, so3_log, NEAR_PI_MARGIN};
pub use sim::{drifting_loop, LoopSimulation};

use std::collections::VecDeque;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::RigidTransform;

/// Central-difference step of the numeric Jacobians.
const JACOBIAN_STEP: f64 = 1e-6;
const MAX_DAMPING: f64 = 1e12;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {0} is not connected to node 0")]
    DisconnectedGraph(usize),
    #[error("rotation of {0:.6} degrees is too close to a half turn for the logarithm")]
    NearPiRotation(f64),
    #[error("invalid edge {index}: {message}")]
    InvalidEdge { index: usize, message: String },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Odometry,
    ClosureFull,
    /// Only the rotational part of the residual counts.
    ClosureRotationOnly,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Odometry => "odometry",
            EdgeKind::ClosureFull => "closure_full",
            EdgeKind::ClosureRotationOnly => "closure_rotation_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [EdgeKind::Odometry, EdgeKind::ClosureFull, EdgeKind::ClosureRotationOnly]
            .into_iter()
            .find(|k| k.as_str() == s)
    }

    fn residual_dim(&self) -> usize {
        match self {
            EdgeKind::ClosureRotationOnly => 3,
            _ => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Camera `j` to camera `i`.
    pub measurement: RigidTransform,
    pub kind: EdgeKind,
    pub weight: f64,
}

impl Edge {
    /// Rotation-only closure from a two-view estimate mapping camera `i` to
    /// camera `j`, whose translation has no metric scale.
    pub fn closure_from_estimate(i: usize, j: usize, relative_i_to_j: &RigidTransform, weight: f64) -> Self {
        Self { i, j, measurement: relative_i_to_j.inverse(), kind: EdgeKind::ClosureRotationOnly, weight }
    }

    /// Weighted residual at the given endpoint poses.
    fn residual(&self, ti: &RigidTransform, tj: &RigidTransform) -> Result<Vec<f64>, GraphError> {
        let err = self.measurement.inverse().compose(&ti.compose(&tj.inverse()));
        let r = se3_log(&err)?;
        let sw = self.weight.sqrt();
        let start = 6 - self.kind.residual_dim();
        Ok(r.iter().skip(start).map(|v| v * sw).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseGraph {
    /// World-to-camera poses; node 0 is held fixed.
    pub nodes: Vec<RigidTransform>,
    pub edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn new(nodes: Vec<RigidTransform>) -> Self {
        Self { nodes, edges: Vec::new() }
    }

    pub fn add_edge(&mut self, edge: Edge) {
        self.edges.push(edge);
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        for (index, e) in self.edges.iter().enumerate() {
            let bad = |message: String| Err(GraphError::InvalidEdge { index, message });
            if e.i >= self.nodes.len() || e.j >= self.nodes.len() {
                return bad(format!("endpoint ({}, {}) outside {} nodes", e.i, e.j, self.nodes.len()));
            }
            if e.i == e.j {
                return bad("self loop".into());
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return bad(format!("weight {} is not positive", e.weight));
            }
            if !e.measurement.is_valid(1e-6) {
                return bad("measurement is not a rigid transform".into());
            }
        }
        Ok(())
    }

    /// Errors with the first node not reachable from node 0.
    pub fn check_connected(&self) -> Result<(), GraphError> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(GraphError::DisconnectedGraph(k)),
            None => Ok(()),
        }
    }

    fn residuals(&self, nodes: &[RigidTransform]) -> Result<Vec<f64>, GraphError> {
        let mut out = Vec::new();
        for e in &self.edges {
            out.extend(e.residual(&nodes[e.i], &nodes[e.j])?);
        }
        Ok(out)
    }

    /// `Σ w · ‖r‖²` over all edges.
    pub fn cost(&self) -> Result<f64, GraphError> {
        Ok(self.residuals(&self.nodes)?.iter().map(|v| v * v).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Initial Levenberg-Marquardt damping.
    pub damping: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { max_iters: 100, damping: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub graph: PoseGraph,
    /// Cost before optimization and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn perturbed(t: &RigidTransform, dim: usize, h: f64) -> RigidTransform {
    let mut v = Vector6::zeros();
    v[dim] = h;
    se3_exp(&v).compose(t)
}

fn jacobian(graph: &PoseGraph, nodes: &[RigidTransform], rows: usize) -> Result<DMatrix<f64>, GraphError> {
    let cols = 6 * (nodes.len() - 1);
    let mut jac = DMatrix::zeros(rows, cols);
    let mut row = 0;
    for e in &graph.edges {
        let dim = e.kind.residual_dim();
        for (node, is_i) in [(e.i, true), (e.j, false)] {
            if node == 0 {
                continue;
            }
            for d in 0..6 {
                let eval = |h: f64| {
                    let moved = perturbed(&nodes[node], d, h);
                    if is_i {
                        e.residual(&moved, &nodes[e.j])
                    } else {
                        e.residual(&nodes[e.i], &moved)
                    }
                };
                let (plus, minus) = (eval(JACOBIAN_STEP)?, eval(-JACOBIAN_STEP)?);
                for k in 0..dim {
                    jac[(row + k, 6 * (node - 1) + d)] += (plus[k] - minus[k]) / (2.0 * JACOBIAN_STEP);
                }
            }
        }
        row += dim;
    }
    Ok(jac)
}

/// Minimizes [`PoseGraph::cost`] over every node but node 0, which stays
/// bit-identical.
///
/// Steps left-multiply each node by the exponential of its update. A step is
/// accepted only if it lowers the cost; damping halves on acceptance and
/// grows tenfold on rejection.
pub fn optimize(graph: &PoseGraph, cfg: &OptimizeConfig) -> Result<Optimized, GraphError> {
    graph.validate()?;
    graph.check_connected()?;
    let mut nodes = graph.nodes.clone();
    let mut r = DVector::from_vec(graph.residuals(&nodes)?);
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut lambda = cfg.damping;
    let mut iterations = 0;
    if nodes.len() < 2 || graph.edges.is_empty() {
        return Ok(Optimized { graph: graph.clone(), history, iterations });
    }
    while iterations < cfg.max_iters {
        iterations += 1;
        let jac = jacobian(graph, &nodes, r.len())?;
        let g = jac.transpose() * &r;
        if g.amax() < 1e-14 {
            break;
        }
        let h = jac.transpose() * &jac;
        let mut accepted = false;
        while lambda < MAX_DAMPING {
            let damped = &h + DMatrix::identity(h.nrows(), h.ncols()) * lambda;
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let candidate: Vec<RigidTransform> = nodes
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    if k == 0 {
                        *t
                    } else {
                        se3_exp(&Vector6::from_iterator(delta.rows(6 * (k - 1), 6).iter().copied())).compose(t)
                    }
                })
                .collect();
            let new_r = match graph.residuals(&candidate) {
                Ok(v) => DVector::from_vec(v),
                Err(GraphError::NearPiRotation(_)) => {
                    lambda *= 10.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let new_cost = new_r.norm_squared();
            if new_cost < cost {
                let gain = cost - new_cost;
                nodes = candidate;
                r = new_r;
                cost = new_cost;
                history.push(cost);
                lambda = (lambda * 0.5).max(1e-12);
                accepted = true;
                if gain <= 1e-12 * cost.max(1e-300) || cost < 1e-24 {
                    return Ok(Optimized { graph: PoseGraph { nodes, edges: graph.edges.clone() }, history, iterations });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(Optimized { graph: PoseGraph { nodes, edges: graph.edges.clone() }, history, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn pose(yaw: f64, t: [f64; 3]) -> RigidTransform {
        RigidTransform::new(
            RigidTransform::from_axis_angle(&Vector3::y(), yaw).rotation,
            Vector3::from(t),
        )
    }

    fn exact_edge(nodes: &[RigidTransform], i: usize, j: usize, kind: EdgeKind) -> Edge {
        Edge { i, j, measurement: nodes[i].compose(&nodes[j].inverse()), kind, weight: 1.0 }
    }

    #[test]
    fn consistent_chain_is_a_fixed_point() {
        let nodes = vec![pose(0.0, [0.0; 3]), pose(0.2, [1.0, 0.0, 0.1]), pose(0.5, [2.0, 0.3, 0.0])];
        let mut g = PoseGraph::new(nodes.clone());
        g.add_edge(exact_edge(&nodes, 0, 1, EdgeKind::Odometry));
        g.add_edge(exact_edge(&nodes, 1, 2, EdgeKind::Odometry));
        g.add_edge(exact_edge(&nodes, 2, 0, EdgeKind::ClosureRotationOnly));
        assert!(g.cost().unwrap() < 1e-12);
        let out = optimize(&g, &OptimizeConfig::default()).unwrap();
        for (a, b) in out.graph.nodes.iter().zip(&nodes) {
            assert!((a.rotation - b.rotation).abs().max() < 1e-9);
            assert!((a.translation - b.translation).abs().max() < 1e-9);
        }
    }

    #[test]
    fn triangle_with_perturbed_odometry() {
        // one edge off by a pure translation, the closure trusted
        let truth = vec![pose(0.0, [0.0; 3]), pose(0.3, [1.0, 0.0, 0.0]), pose(0.6, [1.0, 0.0, 1.0])];
        let mut g = PoseGraph::new(truth.clone());
        let mut bad = exact_edge(&truth, 0, 1, EdgeKind::Odometry);
        bad.measurement = se3_exp(&Vector6::new(0.1, -0.05, 0.02, 0.0, 0.0, 0.0)).compose(&bad.measurement);
        g.add_edge(bad);
        g.add_edge(exact_edge(&truth, 1, 2, EdgeKind::Odometry));
        let closure_weight = 20.0;
        g.add_edge(Edge { weight: closure_weight, ..exact_edge(&truth, 2, 0, EdgeKind::ClosureFull) });
        // start from dead reckoning along the perturbed chain
        g.nodes[1] = g.edges[0].measurement.inverse().compose(&g.nodes[0]);
        g.nodes[2] = g.edges[1].measurement.inverse().compose(&g.nodes[1]);
        let initial = g.cost().unwrap();
        let out = optimize(&g, &OptimizeConfig::default()).unwrap();
        let last = *out.history.last().unwrap();
        assert!(last < initial / 10.0, "{initial} -> {last}");
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(out.graph.nodes[0], g.nodes[0]);
    }

    #[test]
    fn disconnected_rejected() {
        let nodes = vec![RigidTransform::identity(); 3];
        let mut g = PoseGraph::new(nodes.clone());
        g.add_edge(exact_edge(&nodes, 0, 1, EdgeKind::Odometry));
        assert!(matches!(optimize(&g, &OptimizeConfig::default()), Err(GraphError::DisconnectedGraph(2))));
    }

    #[test]
    fn invalid_edges_rejected() {
        let nodes = vec![RigidTransform::identity(); 2];
        let mut g = PoseGraph::new(nodes.clone());
        g.add_edge(Edge { weight: 0.0, ..exact_edge(&nodes, 0, 1, EdgeKind::Odometry) });
        assert!(matches!(g.validate(), Err(GraphError::InvalidEdge { .. })));
        let mut g = PoseGraph::new(nodes.clone());
        g.add_edge(Edge { j: 5, ..exact_edge(&nodes, 0, 1, EdgeKind::Odometry) });
        assert!(g.validate().is_err());
    }

    #[test]
    fn closure_from_estimate_inverts() {
        let ti = pose(0.1, [0.0, 1.0, 0.0]);
        let tj = pose(-0.4, [2.0, 0.0, 1.0]);
        let rel = tj.compose(&ti.inverse());
        let e = Edge::closure_from_estimate(0, 1, &rel, 1.0);
        assert!(e.residual(&ti, &tj).unwrap().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(e.kind, EdgeKind::ClosureRotationOnly);
    }

    #[test]
    fn rotation_only_ignores_translation() {
        let nodes = vec![pose(0.0, [0.0; 3]), pose(0.2, [1.0, 0.0, 0.0])];
        let mut e = exact_edge(&nodes, 0, 1, EdgeKind::ClosureRotationOnly);
        e.measurement.translation += Vector3::new(3.0, -1.0, 2.0);
        assert!(e.residual(&nodes[0], &nodes[1]).unwrap().iter().all(|v| v.abs() < 1e-12));
    }
}
