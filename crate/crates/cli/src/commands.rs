use std::path::Path;
use std::sync::Arc;

use log::info;
use nalgebra::{Rotation3, UnitQuaternion};
use serde_json::json;
use xpose_core::eval::{rotation_error_deg, run_benchmark, translation_angle_deg, Backend, BenchmarkOptions, PipelineSolver};
use xpose_core::graph::{optimize, OptimizeConfig, PoseGraph};
use xpose_core::matching::{estimate_pair, PairInput};
use xpose_core::synth::{gen_dataset, make_asset, manifest_base, DatasetConfig, DatasetManifest, OracleProvider, SyntheticView, MANIFEST_FILE};
use xpose_core::viewgen::{GeneratorProvider, MockGenerator, MockServer, RemoteGenerator, SharedGenerator, MOCK_MODEL_ID};
use xpose_core::RigidTransform;

use crate::config::{Config, Overrides};
use crate::{emit, BackendKind, EstimateArgs, EvalArgs, Failure, GraphOptArgs, PipelineArgs, ServeMockArgs, SynthArgs};

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    if args.pairs == 0 {
        return Err(Failure::usage("--pairs must be at least 1"));
    }
    let mut cfg = DatasetConfig {
        pairs: args.pairs,
        seed: args.seed,
        min_separation_deg: args.min_sep,
        inplane_jitter: !args.no_inplane_jitter,
        ..DatasetConfig::default()
    };
    if let Some(e) = args.max_elevation {
        cfg.max_elevation_deg = e;
    }
    cfg.validate().map_err(Failure::usage)?;
    let manifest = gen_dataset(&cfg, &args.out).map_err(Failure::runtime)?;
    emit(&json!({
        "manifest": args.out.join(MANIFEST_FILE),
        "pairs": manifest.entries.len(),
        "seed": args.seed,
    }))
}

fn resolve_config(path: Option<&Path>, p: &PipelineArgs) -> Result<Config, Failure> {
    let overrides = Overrides {
        endpoint: p.endpoint.clone(),
        n_views: p.n_views,
        refine_iters: p.refine_iters,
        seed: p.seed,
        generator_margin: p.generator_margin,
    };
    Config::resolve(path, &overrides).map_err(Failure::usage)
}

fn backend(kind: BackendKind, cfg: &Config) -> Result<Backend, Failure> {
    Ok(match kind {
        BackendKind::Oracle => Backend::Oracle,
        BackendKind::Mock => Backend::Generator { name: "mock".into(), generator: Arc::new(MockGenerator) },
        BackendKind::Remote => {
            let endpoint = cfg.generator.endpoint.clone().ok_or_else(|| {
                Failure::usage("the remote backend needs --endpoint, generator.endpoint or XPOSE_GENERATOR_ENDPOINT")
            })?;
            let client = RemoteGenerator::with_options(endpoint, cfg.timeout(), cfg.generator.max_in_flight);
            Backend::Generator { name: "remote".into(), generator: Arc::new(client) }
        }
    })
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    DatasetManifest::load(path).map_err(Failure::runtime)
}

fn input(v: &SyntheticView) -> PairInput<'_> {
    PairInput { image: &v.image, mask: &v.mask, intrinsics: &v.intrinsics }
}

fn pose_json(t: &RigidTransform) -> serde_json::Value {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(t.rotation));
    let norm = t.translation.norm();
    let direction = if norm > 0.0 { (t.translation / norm).as_slice().to_vec() } else { vec![0.0; 3] };
    json!({
        "rotation_wxyz": [q.w, q.i, q.j, q.k],
        "translation_direction": direction,
        "rotation": t.rotation.transpose().as_slice(),
        "translation": t.translation.as_slice(),
    })
}

pub fn estimate(args: EstimateArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg = resolve_config(config, &args.pipeline)?;
    let backend = backend(args.pipeline.backend, &cfg)?;
    let manifest = load_manifest(&args.manifest)?;
    let entry = manifest
        .entry(&args.pair)
        .ok_or_else(|| Failure::usage(format!("no pair {:?} in {}", args.pair, args.manifest.display())))?;
    let base = manifest_base(&args.manifest);
    let views = [entry.load_view(&base, 0).map_err(Failure::runtime)?, entry.load_view(&base, 1).map_err(Failure::runtime)?];

    let provider: Box<dyn GeneratorProvider> = match &backend {
        Backend::Oracle => {
            let seed = entry
                .asset_seed
                .ok_or_else(|| Failure::usage(format!("pair {} has no asset_seed; the oracle backend needs one", entry.id)))?;
            Box::new(OracleProvider::new(Arc::new(make_asset(seed)), entry.pose(0)))
        }
        Backend::Generator { generator, .. } => Box::new(SharedGenerator::clone(generator)),
    };
    let est = estimate_pair(input(&views[0]), input(&views[1]), provider.as_ref(), &cfg.pipeline).map_err(Failure::runtime)?;
    info!("{}: estimated in {:.0} ms", entry.id, est.diagnostics.timings.total_ms);

    let gt = entry.relative();
    emit(&json!({
        "pair": entry.id,
        "backend": backend.name(),
        "relative": pose_json(&est.relative),
        "rot_err_deg": rotation_error_deg(&gt.rotation, &est.relative.rotation),
        "trans_err_deg": translation_angle_deg(&gt.translation, &est.relative.translation).ok(),
        "diagnostics": est.diagnostics,
    }))
}

pub fn eval(args: EvalArgs, config: Option<&Path>) -> Result<(), Failure> {
    if !(args.dilate >= 0.0 && args.dilate.is_finite()) {
        return Err(Failure::usage(format!("--dilate must be a non-negative percentage, got {}", args.dilate)));
    }
    let cfg = resolve_config(config, &args.pipeline)?;
    let backend = backend(args.pipeline.backend, &cfg)?;
    let manifest = load_manifest(&args.manifest)?;
    let solver = PipelineSolver { config: cfg.pipeline.clone(), backend };
    let opts = BenchmarkOptions { dilation_percent: args.dilate, max_concurrent: args.max_concurrent };
    let report = run_benchmark(&manifest, &manifest_base(&args.manifest), &solver, &opts).map_err(Failure::runtime)?;
    if let Some(path) = args.report.or(cfg.output.report) {
        report.save(&path).map_err(Failure::runtime)?;
        info!("report written to {}", path.display());
    }
    emit(&serde_json::to_value(&report).map_err(Failure::runtime)?)
}

pub fn graph_opt(args: GraphOptArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg = Config::resolve(config, &Overrides::default()).map_err(Failure::usage)?;
    let mut opt = OptimizeConfig::default();
    if let Some(n) = args.max_iters {
        opt.max_iters = n;
    }
    let graph = PoseGraph::load(&args.graph).map_err(Failure::runtime)?;
    let result = optimize(&graph, &opt).map_err(Failure::runtime)?;
    let out = args.out.or(cfg.output.graph);
    if let Some(path) = &out {
        result.graph.save(path).map_err(Failure::runtime)?;
    }
    emit(&json!({
        "nodes": result.graph.nodes.len(),
        "edges": result.graph.edges.len(),
        "initial_cost": result.history.first(),
        "final_cost": result.history.last(),
        "iterations": result.iterations,
        "out": out,
    }))
}

pub fn serve_mock(args: ServeMockArgs) -> Result<(), Failure> {
    let server = MockServer::start(&format!("{}:{}", args.host, args.port)).map_err(Failure::runtime)?;
    emit(&json!({ "endpoint": server.endpoint(), "model": MOCK_MODEL_ID }))?;
    server.wait();
    Ok(())
}
