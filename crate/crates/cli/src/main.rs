//! `mdke` — train distribution-kernel encoders, export Gram matrices, run
//! the downstream classification protocol, and check the diagnostic
//! identities.
//!
//! Every command is deterministic given its config and seed; all output
//! files are written atomically (temp file + rename). Exit codes: 0 success,
//! 1 a diagnostic identity failed, 2 usage or data error.

mod commands;
mod config;
mod io_util;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mdke", version, about = "Data-dependent distribution kernels from entropy maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON config file; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream in the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (meaning depends on the command).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel inner loops.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset JSONL path.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset schema: `jsonl` or `histogram-jsonl`.
    #[arg(long)]
    pub format: Option<String>,
    /// Encoder kind: `mlp` (raw samples) or `table` (finite support).
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_distributions: Option<usize>,
    #[arg(long)]
    pub samples_per_distribution: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Log-det regularization strength (0 = plain entropy loss).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Distribution-kernel family for training (gaussian, cauchy, imq).
    #[arg(long)]
    pub family: Option<String>,
    /// Embedding-kernel bandwidth, a number or `auto`.
    #[arg(long)]
    pub gamma1: Option<String>,
    /// Distribution-kernel bandwidth, a number or `auto`.
    #[arg(long)]
    pub gamma2: Option<String>,
}

#[derive(Args, Debug)]
pub struct GramArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Trained checkpoint; omit for raw-space kernels (sw1/sw2 or
    /// identity-encoded MMD baselines).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub gamma1: Option<String>,
    #[arg(long)]
    pub gamma2: Option<String>,
    /// Projection count for sw1/sw2.
    #[arg(long)]
    pub sw_projections: Option<usize>,
    /// Subsample this many points per distribution instead of using all.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Write this many independently subsampled Grams.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Gram CSV (repeat the flag for subsampling repeats).
    #[arg(long = "gram")]
    pub grams: Vec<PathBuf>,
    /// Labels file: JSONL `{"id","label"}` or CSV `id,label`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Held-out fraction (stratified), default 0.3.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Comma-separated explicit held-out ids (overrides the fraction).
    #[arg(long)]
    pub test_ids: Option<String>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Check a Gram CSV directly instead of encoding a dataset.
    #[arg(long)]
    pub gram: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Smallest spread in the sweep.
    #[arg(long)]
    pub spread_min: Option<f64>,
    /// Largest spread in the sweep.
    #[arg(long)]
    pub spread_max: Option<f64>,
    /// Number of sweep points (log-spaced), at least 2.
    #[arg(long)]
    pub spread_count: Option<usize>,
    /// Samples per distribution.
    #[arg(long)]
    pub samples_per_distribution: Option<usize>,
    #[arg(long)]
    pub gamma1: Option<String>,
    #[arg(long)]
    pub gamma2: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Unsupervised pre-training of an encoder by entropy maximization.
    Train(TrainArgs),
    /// Compute a distribution-kernel Gram matrix and write it as CSV.
    Gram(GramArgs),
    /// Grid-search SVM evaluation of a precomputed Gram.
    Classify(ClassifyArgs),
    /// Run the diagnostic identity suite.
    Check(CheckArgs),
    /// Sweep cluster spread on the sphere toy task and log diagnostics.
    Toy(ToyArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Gram(args) => commands::gram::run(args),
        Command::Classify(args) => commands::classify::run(args),
        Command::Check(args) => commands::check::run(args),
        Command::Toy(args) => commands::toy::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            let payload = serde_json::json!({ "error": err.to_string() });
            eprintln!("{payload}");
            std::process::exit(2);
        }
    }
}
