use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use xpose_core::geom::{look_at_pose, SphericalViewpoint};
use xpose_core::graph::{Edge, EdgeKind, PoseGraph};
use xpose_core::viewgen::{RemoteGenerator, ENDPOINT_ENV};

/// Small and quick; accuracy is not under test here.
const FAST_CONFIG: &str = r#"
[pipeline]
s_v = 128
n_views = 8
refine_iters = 1
"#;

fn xpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xpose")).args(args).env_remove(ENDPOINT_ENV).output().expect("run xpose")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn synth(dir: &Path, pairs: &str) -> PathBuf {
    let out = xpose(&["synth", "--pairs", pairs, "--min-sep", "120", "--seed", "9", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(stdout_json(&out)["manifest"].as_str().unwrap())
}

fn fast_config(dir: &Path) -> PathBuf {
    let path = dir.join("fast.toml");
    fs::write(&path, FAST_CONFIG).unwrap();
    path
}

#[test]
fn synth_writes_images_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "1");
    assert!(manifest.is_file());
    let pngs = fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count();
    assert_eq!(pngs, 4);
}

#[test]
fn synth_rejects_zero_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = xpose(&["synth", "--pairs", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), "2");
    synth(b.path(), "2");
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(xpose(&["synth", "--pairs", "many", "--out", "x"]).status.code(), Some(2));
    assert_eq!(xpose(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(xpose(&["synth", "--pairs", "1", "--min-sep", "200", "--out", "x"]).status.code(), Some(2));
    assert_eq!(xpose(&["--help"]).status.code(), Some(0));
}

#[test]
fn estimate_with_oracle_reports_errors_against_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "1");
    let config = fast_config(dir.path());
    let out = xpose(&[
        "estimate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--pair",
        "pair_0000",
        "--backend",
        "oracle",
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert_eq!(json["pair"], "pair_0000");
    assert!(json["rot_err_deg"].as_f64().unwrap() >= 0.0);
    assert_eq!(json["relative"]["rotation_wxyz"].as_array().unwrap().len(), 4);
    let dir_norm: f64 = json["relative"]["translation_direction"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap().powi(2)).sum();
    assert!((dir_norm - 1.0).abs() < 1e-9);
    assert!(json["diagnostics"]["timings"]["total_ms"].is_number());
}

#[test]
fn estimate_unknown_pair_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "1");
    let out = xpose(&["estimate", "--manifest", manifest.to_str().unwrap(), "--pair", "missing-id"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_with_unreachable_remote_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "1");
    let out = xpose(&[
        "estimate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--pair",
        "pair_0000",
        "--backend",
        "remote",
        "--endpoint",
        "http://127.0.0.1:9",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stdout_json(&out)["error"].as_str().unwrap().to_owned();
    assert!(msg.contains("generator"), "{msg}");
}

#[test]
fn environment_endpoint_wins_over_flag() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "1");
    let out = Command::new(env!("CARGO_BIN_EXE_xpose"))
        .args(["estimate", "--manifest", manifest.to_str().unwrap(), "--pair", "pair_0000", "--backend", "remote"])
        .args(["--endpoint", "not a url"])
        .env(ENDPOINT_ENV, "http://127.0.0.1:9")
        .output()
        .unwrap();
    // the flag alone would be a usage error; the environment replaces it
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = xpose(&["estimate", "--manifest", manifest.to_str().unwrap(), "--pair", "pair_0000", "--backend", "remote"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "1");
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[pipeline]\nn_veiws = 3\n").unwrap();
    let out = xpose(&["eval", "--manifest", manifest.to_str().unwrap(), "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_veiws"));
}

#[test]
fn eval_writes_report_with_accuracies() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "2");
    let config = fast_config(dir.path());
    let report = dir.path().join("report.json");
    let out = xpose(&[
        "eval",
        "--manifest",
        manifest.to_str().unwrap(),
        "--dilate",
        "2",
        "--report",
        report.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    for key in ["rot15", "rot30", "trans15", "trans30"] {
        assert!(json["acc"][key].is_number(), "{key}");
    }
    assert_eq!(json["pairs"].as_array().unwrap().len(), 2);
    let saved: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved, json);
}

#[test]
fn graph_opt_keeps_consistent_chain() {
    let dir = tempfile::tempdir().unwrap();
    let nodes: Vec<_> = (0..5).map(|k| look_at_pose(&SphericalViewpoint::new(40.0 * k as f64, 10.0, 0.0, 4.0))).collect();
    let mut graph = PoseGraph::new(nodes.clone());
    for k in 0..4 {
        let measurement = nodes[k].compose(&nodes[k + 1].inverse());
        graph.add_edge(Edge { i: k, j: k + 1, measurement, kind: EdgeKind::Odometry, weight: 1.0 });
    }
    let input = dir.path().join("chain.graph");
    let output = dir.path().join("out.graph");
    graph.save(&input).unwrap();
    let out = xpose(&["graph-opt", "--graph", input.to_str().unwrap(), "--out", output.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["nodes"], 5);
    let back = PoseGraph::load(&output).unwrap();
    for (a, b) in back.nodes.iter().zip(&nodes) {
        assert!((a.rotation - b.rotation).norm() < 1e-12 && (a.translation - b.translation).norm() < 1e-12);
    }
}

#[test]
fn graph_opt_missing_file_is_runtime_error() {
    let out = xpose(&["graph-opt", "--graph", "/nonexistent/graph.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_json(&out)["error"].is_string());
}

#[test]
fn serve_mock_answers_health() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_xpose"))
        .args(["serve-mock", "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let first: Value = serde_json::Deserializer::from_reader(stdout).into_iter().next().unwrap().unwrap();
    let health = RemoteGenerator::new(first["endpoint"].as_str().unwrap()).health();
    child.kill().unwrap();
    let _ = child.wait();
    assert_eq!(health.unwrap().status, "ok");
}
