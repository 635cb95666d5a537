//! `dasps`: batch front end for decomposition, covariate screening,
//! training, prediction and evaluation.
//!
//! Data goes to files or stdout, diagnostics to stderr. Exit status is 0 on
//! success, 2 for usage errors (including unknown columns) and 1 otherwise.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dasps::data::{DataError, Split};
use dasps::training::{Ablation, TrainError};

#[derive(Parser, Debug)]
#[command(
    name = "dasps",
    version,
    about = "Decomposition-aware multivariate forecaster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Flags override values from `--config`.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat TOML file of training keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for written artifacts; created when missing.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Forecast distance in steps: 3, 6, 12 or 24.
    #[arg(long, value_parser = parse_horizon)]
    pub horizon: Option<usize>,
    /// Add the gate bias before the sigmoid instead of after it.
    #[arg(long)]
    pub bias_inside_gate: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split one column into trend / seasonal / noise.
    Decompose(DecomposeArgs),
    /// Rank-correlate every covariate with the target on the training split.
    Correlate(CorrelateArgs),
    /// Train a model and write checkpoint, manifest, log, metrics and curves.
    Train(TrainArgs),
    /// Forecast one split with a saved checkpoint.
    Predict(PredictArgs),
    /// Score a prediction CSV, or a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub column: String,
    /// `ssa` or `stl`; defaults to the configured decomposition.
    #[arg(long)]
    pub method: Option<String>,
    /// SSA embedding dimension.
    #[arg(long)]
    pub m: Option<usize>,
    /// Moving-average width for `stl`.
    #[arg(long)]
    pub kernel: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target: Option<String>,
    /// One of full, no-ssa, no-pconv, no-spearman, stl.
    #[arg(long)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// CSV with `truth` and `pred` columns; normalized columns win when present.
    #[arg(long, conflicts_with_all = ["checkpoint", "data"])]
    pub predictions: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Report conventional Pearson correlation instead of the per-sample form.
    #[arg(long)]
    pub corr_standard: bool,
    #[command(flatten)]
    pub common: Common,
}

fn parse_horizon(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(h @ (3 | 6 | 12 | 24)) => Ok(h),
        _ => Err(format!("'{s}' is not one of 3, 6, 12, 24")),
    }
}

/// An error the caller can fix by changing the invocation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    // transparent wrappers hide the data error from the source chain
    let usage = err.chain().any(|e| {
        e.is::<Usage>()
            || matches!(
                e.downcast_ref::<DataError>(),
                Some(DataError::UnknownColumn { .. })
            )
            || matches!(
                e.downcast_ref::<TrainError>(),
                Some(TrainError::Data(DataError::UnknownColumn { .. }))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Decompose(a) => commands::decompose(&a),
        Command::Correlate(a) => commands::correlate(&a),
        Command::Train(a) => commands::train(&a, &argv),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
