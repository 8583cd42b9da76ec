use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use xpose_core::viewgen::{resolve_endpoint, RemoteGenerator};
use xpose_core::PipelineConfig;

/// Contents of the TOML config file. Every section and key is optional;
/// unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub generator: GeneratorConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Base URL of a `/v1` generator service.
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_secs: RemoteGenerator::DEFAULT_TIMEOUT.as_secs(),
            max_in_flight: RemoteGenerator::DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Where `eval` writes its report when `--report` is absent.
    pub report: Option<PathBuf>,
    /// Where `graph-opt` writes the optimized graph when `--out` is absent.
    pub graph: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub endpoint: Option<String>,
    pub n_views: Option<usize>,
    pub refine_iters: Option<usize>,
    pub seed: Option<u64>,
    pub generator_margin: Option<f64>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_owned(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::parse(&text, path)
    }

    /// File config (or defaults) with flags applied on top, then the
    /// environment endpoint on top of that. Validated.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(e) = &overrides.endpoint {
            cfg.generator.endpoint = Some(e.clone());
        }
        cfg.generator.endpoint = resolve_endpoint(cfg.generator.endpoint.as_deref());
        let p = &mut cfg.pipeline;
        p.n_views = overrides.n_views.unwrap_or(p.n_views);
        p.refine_iters = overrides.refine_iters.unwrap_or(p.refine_iters);
        p.seed = overrides.seed.unwrap_or(p.seed);
        p.generator_margin = overrides.generator_margin.unwrap_or(p.generator_margin);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.generator.timeout_secs == 0 {
            return Err(ConfigError::Invalid("generator.timeout_secs must be positive".into()));
        }
        if self.generator.max_in_flight == 0 {
            return Err(ConfigError::Invalid("generator.max_in_flight must be at least 1".into()));
        }
        if let Some(e) = &self.generator.endpoint {
            if !(e.starts_with("http://") || e.starts_with("https://")) {
                return Err(ConfigError::Invalid(format!("generator.endpoint {e:?} is not an http(s) URL")));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.generator.timeout_secs)
    }
}
