use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy_at, dilate_mask, rotation_error_deg, translation_angle_deg, EvalError};
use crate::geom::RigidTransform;
use crate::matching::{estimate_pair, PairInput, PipelineConfig, StageTimings};
use crate::synth::{make_asset, DatasetManifest, ManifestEntry, OracleProvider, SyntheticView};
use crate::viewgen::SharedGenerator;

/// Error assigned to a pair the solver failed on.
pub const FAILURE_ERROR_DEG: f64 = 180.0;

/// Output of a solver on one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedPair {
    /// Camera 1 to camera 2.
    pub relative: RigidTransform,
    pub timings: Option<StageTimings>,
}

/// Anything that turns a manifest entry into a relative pose.
pub trait PairSolver: Sync {
    fn solve(&self, entry: &ManifestEntry, views: &[SyntheticView; 2]) -> Result<SolvedPair, String>;

    /// Echoed into the report.
    fn describe(&self) -> serde_json::Value;
}

/// Where the pipeline gets its novel views.
#[derive(Clone)]
pub enum Backend {
    /// Re-render the pair's procedural asset; needs `asset_seed` in the
    /// manifest.
    Oracle,
    /// One generator for every pair, for example the mock server or a remote
    /// endpoint.
    Generator { name: String, generator: SharedGenerator },
}

impl Backend {
    pub fn name(&self) -> &str {
        match self {
            Backend::Oracle => "oracle",
            Backend::Generator { name, .. } => name,
        }
    }
}

/// Runs [`estimate_pair`] with a fixed configuration and backend.
#[derive(Clone)]
pub struct PipelineSolver {
    pub config: PipelineConfig,
    pub backend: Backend,
}

impl PairSolver for PipelineSolver {
    fn solve(&self, entry: &ManifestEntry, views: &[SyntheticView; 2]) -> Result<SolvedPair, String> {
        fn input(v: &SyntheticView) -> PairInput<'_> {
            PairInput { image: &v.image, mask: &v.mask, intrinsics: &v.intrinsics }
        }
        let estimate = match &self.backend {
            Backend::Oracle => {
                let seed = entry.asset_seed.ok_or_else(|| format!("{}: oracle backend needs asset_seed", entry.id))?;
                let provider = OracleProvider::new(Arc::new(make_asset(seed)), entry.pose(0));
                estimate_pair(input(&views[0]), input(&views[1]), &provider, &self.config)
            }
            Backend::Generator { generator, .. } => estimate_pair(input(&views[0]), input(&views[1]), generator, &self.config),
        }
        .map_err(|e| e.to_string())?;
        Ok(SolvedPair { relative: estimate.relative, timings: Some(estimate.diagnostics.timings) })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "backend": self.backend.name(), "pipeline": self.config })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkOptions {
    /// Dilation applied to both masks, percent of the bounding box side.
    pub dilation_percent: f64,
    /// Pairs evaluated at once; 0 uses the global thread pool as is.
    pub max_concurrent: usize,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self { dilation_percent: 0.0, max_concurrent: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub id: String,
    pub rot_err_deg: f64,
    pub trans_err_deg: f64,
    pub time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
    /// Set when the solver failed; both errors are then 180.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub rot15: f64,
    pub rot30: f64,
    pub trans15: f64,
    pub trans30: f64,
}

impl Accuracy {
    pub fn from_results(pairs: &[PairResult]) -> Result<Self, EvalError> {
        let rot: Vec<f64> = pairs.iter().map(|p| p.rot_err_deg).collect();
        let trans: Vec<f64> = pairs.iter().map(|p| p.trans_err_deg).collect();
        Ok(Self {
            rot15: accuracy_at(&rot, 15.0)?,
            rot30: accuracy_at(&rot, 30.0)?,
            trans15: accuracy_at(&trans, 15.0)?,
            trans30: accuracy_at(&trans, 30.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: serde_json::Value,
    /// Sorted by pair id.
    pub pairs: Vec<PairResult>,
    pub acc: Accuracy,
}

impl BenchmarkReport {
    pub fn failures(&self) -> usize {
        self.pairs.iter().filter(|p| p.error.is_some()).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|source| EvalError::Io { path: path.to_owned(), source })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_owned(), source })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn evaluate_entry(entry: &ManifestEntry, base: &Path, solver: &dyn PairSolver, opts: &BenchmarkOptions) -> PairResult {
    let t = Instant::now();
    let outcome = (|| {
        let mut views = [entry.load_view(base, 0).map_err(|e| e.to_string())?, entry.load_view(base, 1).map_err(|e| e.to_string())?];
        if opts.dilation_percent > 0.0 {
            for v in &mut views {
                v.mask = dilate_mask(&v.mask, opts.dilation_percent).map_err(|e| e.to_string())?;
            }
        }
        solver.solve(entry, &views)
    })();
    let time_ms = t.elapsed().as_secs_f64() * 1e3;
    let failed = |id: &str, error: String| {
        warn!("{id}: {error}");
        PairResult {
            id: id.to_owned(),
            rot_err_deg: FAILURE_ERROR_DEG,
            trans_err_deg: FAILURE_ERROR_DEG,
            time_ms,
            timings: None,
            error: Some(error),
        }
    };
    match outcome {
        Ok(solved) => {
            let gt = entry.relative();
            let rot_err_deg = rotation_error_deg(&gt.rotation, &solved.relative.rotation);
            let trans_err_deg = translation_angle_deg(&gt.translation, &solved.relative.translation).unwrap_or(FAILURE_ERROR_DEG);
            info!("{}: rotation {rot_err_deg:.2} translation {trans_err_deg:.2} ({time_ms:.0} ms)", entry.id);
            PairResult { id: entry.id.clone(), rot_err_deg, trans_err_deg, time_ms, timings: solved.timings, error: None }
        }
        Err(e) => failed(&entry.id, e),
    }
}

/// Evaluates `solver` on every entry of `manifest`, whose image paths are
/// relative to `base`. Per-pair failures are recorded, not propagated.
pub fn run_benchmark(
    manifest: &DatasetManifest,
    base: &Path,
    solver: &dyn PairSolver,
    opts: &BenchmarkOptions,
) -> Result<BenchmarkReport, EvalError> {
    if manifest.entries.is_empty() {
        return Err(EvalError::EmptyList);
    }
    if !(opts.dilation_percent >= 0.0) {
        return Err(EvalError::InvalidArgument(format!("dilation percent must be non-negative, got {}", opts.dilation_percent)));
    }
    let run = || -> Vec<PairResult> {
        manifest.entries.par_iter().map(|e| evaluate_entry(e, base, solver, opts)).collect()
    };
    let mut pairs = if opts.max_concurrent > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.max_concurrent)
            .build()
            .map_err(|e| EvalError::InvalidArgument(e.to_string()))?
            .install(run)
    } else {
        run()
    };
    pairs.sort_by(|a, b| a.id.cmp(&b.id));
    let acc = Accuracy::from_results(&pairs)?;
    let config = serde_json::json!({
        "solver": solver.describe(),
        "dilation_percent": opts.dilation_percent,
        "pairs": pairs.len(),
    });
    Ok(BenchmarkReport { config, pairs, acc })
}
