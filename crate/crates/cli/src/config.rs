//! Single-document JSON run configuration.
//!
//! Every command reads the same schema; unknown keys are rejected so a typo
//! cannot silently fall back to a default. Command-line flags override config
//! values, which override built-in defaults.

use std::path::{Path, PathBuf};

use mdke_core::kernels::Bandwidth;
use mdke_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // paths
    pub data: Option<PathBuf>,
    pub format: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub grams: Option<Vec<PathBuf>>,

    // training
    pub encoder: Option<String>,
    pub latent_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub steps: Option<usize>,
    pub batch_distributions: Option<usize>,
    pub samples_per_distribution: Option<usize>,
    pub lr: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub epsilon: Option<f64>,
    pub log_every: Option<usize>,

    // kernel
    pub family: Option<String>,
    pub gamma1: Option<Bandwidth>,
    pub gamma2: Option<Bandwidth>,
    pub sw_projections: Option<usize>,
    pub jitter: Option<f64>,

    // gram subsampling
    pub samples: Option<usize>,
    pub repeats: Option<usize>,

    // classify protocol
    pub test_fraction: Option<f64>,
    pub test_ids: Option<Vec<String>>,

    // toy sweep
    pub spread_min: Option<f64>,
    pub spread_max: Option<f64>,
    pub spread_count: Option<usize>,

    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Invalid(format!("config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Invalid(format!("config {}: {e}", p.display())))
            }
        }
    }
}

/// Parse a `--gamma` style flag: a number or the literal `auto`.
pub fn parse_bandwidth(flag: &str) -> Result<Bandwidth> {
    if flag == "auto" {
        return Ok(Bandwidth::Auto);
    }
    flag.parse::<f64>()
        .map(Bandwidth::Fixed)
        .map_err(|_| Error::Invalid(format!("bandwidth must be a number or `auto`, got `{flag}`")))
}

/// Flag value wins over config value, else the default.
pub fn pick<T: Clone>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Flag value wins over config value; error if neither is present.
pub fn require<T: Clone>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    flag.or(config)
        .ok_or_else(|| Error::Invalid(format!("missing required option `{name}`")))
}
