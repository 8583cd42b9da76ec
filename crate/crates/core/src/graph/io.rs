use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::{Edge, EdgeKind, GraphError, PoseGraph};
use crate::geom::RigidTransform;

fn quaternion_of(t: &RigidTransform) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(t.rotation));
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

fn pose_fields(t: &RigidTransform) -> String {
    let q = quaternion_of(t);
    let v = t.translation;
    format!("{:?} {:?} {:?} {:?} {:?} {:?} {:?}", v.x, v.y, v.z, q.i, q.j, q.k, q.w)
}

/// Serializes `graph` as `NODE id tx ty tz qx qy qz qw` lines followed by
/// `EDGE kind i j tx ty tz qx qy qz qw weight` lines. Quaternions are unit
/// with `w >= 0`.
pub fn write_graph(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for (id, n) in graph.nodes.iter().enumerate() {
        let _ = writeln!(out, "NODE {id} {}", pose_fields(n));
    }
    for e in &graph.edges {
        let _ = writeln!(out, "EDGE {} {} {} {} {:?}", e.kind.as_str(), e.i, e.j, pose_fields(&e.measurement), e.weight);
    }
    out
}

fn parse_pose(fields: &[&str], line: usize) -> Result<RigidTransform, GraphError> {
    let nums: Vec<f64> = fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|_| GraphError::Parse { line, message: format!("not a number: {f}") }))
        .collect::<Result<_, _>>()?;
    if nums.iter().any(|v| !v.is_finite()) {
        return Err(GraphError::Parse { line, message: "non-finite value".into() });
    }
    let q = Quaternion::new(nums[6], nums[3], nums[4], nums[5]);
    if q.norm() < 1e-9 {
        return Err(GraphError::Parse { line, message: "zero quaternion".into() });
    }
    let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
    Ok(RigidTransform::new(rotation, Vector3::new(nums[0], nums[1], nums[2])))
}

fn parse_index(s: &str, line: usize) -> Result<usize, GraphError> {
    s.parse().map_err(|_| GraphError::Parse { line, message: format!("not an index: {s}") })
}

/// Parses the format written by [`write_graph`]. Blank lines and lines
/// starting with `#` are skipped; node ids must cover `0..n` exactly once.
pub fn read_graph(text: &str) -> Result<PoseGraph, GraphError> {
    let mut nodes: Vec<Option<RigidTransform>> = Vec::new();
    let mut edges = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.first() {
            None => continue,
            Some(f) if f.starts_with('#') => continue,
            Some(&"NODE") => {
                if fields.len() != 9 {
                    return Err(GraphError::Parse { line, message: format!("NODE needs 8 fields, got {}", fields.len() - 1) });
                }
                let id = parse_index(fields[1], line)?;
                if id >= nodes.len() {
                    nodes.resize(id + 1, None);
                }
                if nodes[id].is_some() {
                    return Err(GraphError::Parse { line, message: format!("duplicate node {id}") });
                }
                nodes[id] = Some(parse_pose(&fields[2..9], line)?);
            }
            Some(&"EDGE") => {
                if fields.len() != 12 {
                    return Err(GraphError::Parse { line, message: format!("EDGE needs 11 fields, got {}", fields.len() - 1) });
                }
                let kind = EdgeKind::parse(fields[1])
                    .ok_or_else(|| GraphError::Parse { line, message: format!("unknown edge kind {}", fields[1]) })?;
                let (i, j) = (parse_index(fields[2], line)?, parse_index(fields[3], line)?);
                let measurement = parse_pose(&fields[4..11], line)?;
                let weight = fields[11]
                    .parse()
                    .map_err(|_| GraphError::Parse { line, message: format!("not a weight: {}", fields[11]) })?;
                edges.push(Edge { i, j, measurement, kind, weight });
            }
            Some(other) => return Err(GraphError::Parse { line, message: format!("unknown record {other}") }),
        }
    }
    let nodes: Vec<RigidTransform> = nodes
        .into_iter()
        .enumerate()
        .map(|(id, n)| n.ok_or(GraphError::Parse { line: 0, message: format!("node {id} missing") }))
        .collect::<Result<_, _>>()?;
    let graph = PoseGraph { nodes, edges };
    graph.validate()?;
    Ok(graph)
}

impl PoseGraph {
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io { path: path.to_owned(), source })?;
        read_graph(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, write_graph(self)).map_err(|source| GraphError::Io { path: path.to_owned(), source })
    }
}
