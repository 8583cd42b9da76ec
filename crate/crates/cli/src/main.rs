//! `xpose` command-line tool. JSON goes to stdout, logs to stderr.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "xpose", version, about = "Relative pose between two views of an object under extreme viewpoint change")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic pair dataset with a manifest.
    Synth(SynthArgs),
    /// Estimate the relative pose of one manifest pair.
    Estimate(EstimateArgs),
    /// Run the pipeline over a manifest and report accuracies.
    Eval(EvalArgs),
    /// Optimize a pose graph file.
    GraphOpt(GraphOptArgs),
    /// Serve the mock `/v1` generator.
    ServeMock(ServeMockArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    pairs: usize,
    /// Minimum angle between the two viewing directions, degrees.
    #[arg(long, default_value_t = 0.0)]
    min_sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Keep both cameras upright instead of rolling them in [-45, 45].
    #[arg(long)]
    no_inplane_jitter: bool,
    #[arg(long)]
    max_elevation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Oracle,
    Mock,
    Remote,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Oracle)]
    backend: BackendKind,
    /// Generator endpoint for the remote backend; XPOSE_GENERATOR_ENDPOINT wins over it.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    n_views: Option<usize>,
    #[arg(long)]
    refine_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generator_margin: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    pair: String,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Mask dilation, percent of the mask's bounding box side.
    #[arg(long, default_value_t = 0.0)]
    dilate: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Pairs evaluated concurrently; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    max_concurrent: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct GraphOptArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct ServeMockArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn usage(e: impl ToString) -> Self {
        Self::Usage(e.to_string())
    }

    pub fn runtime(e: impl ToString) -> Self {
        Self::Runtime(e.to_string())
    }
}

/// Writes one JSON document to stdout.
pub fn emit(value: &serde_json::Value) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(Failure::runtime)?;
    writeln!(out).and_then(|_| out.flush()).map_err(Failure::runtime)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Estimate(a) => commands::estimate(a, config),
        Command::Eval(a) => commands::eval(a, config),
        Command::GraphOpt(a) => commands::graph_opt(a, config),
        Command::ServeMock(a) => commands::serve_mock(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            log::error!("{msg}");
            let _ = emit(&serde_json::json!({ "error": msg }));
            ExitCode::from(1)
        }
    }
}
