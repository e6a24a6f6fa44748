//! `cspine`: the pipeline as subcommands sharing one configuration file.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cspine_core::mtl::TrainMode;

use crate::error::CliError;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage or configuration error
  3  missing input file
  4  input failed validation
  5  runtime or I/O failure
Failures print a one-line JSON error record on stderr.";

#[derive(Debug, Parser)]
#[command(name = "cspine", version, about = "Per-segment pathology extraction for cervical spine reports", after_help = EXIT_CODES)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic corpus.
    Generate(GenerateArgs),
    /// Split reports into per-segment bundles with an audit trail.
    Segment(SegmentArgs),
    /// Write hashed n-gram embeddings for bundles.
    Featurize(FeaturizeArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Evaluate a checkpoint, or compare single-task and multitask models over seeds.
    Eval(EvalArgs),
    /// Sliced Wasserstein distances between label-conditional clouds.
    Distance(DistanceArgs),
    /// Inference walltime of one multitask model against four single-task models.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of reports.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub practices: Option<usize>,
    #[arg(long)]
    pub ocr_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Report JSONL (may also contain gold bundles).
    #[arg(long, value_name = "FILE")]
    pub reports: PathBuf,
    /// Gold bundle JSONL supplying the labels.
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Disable list-header carry-forward.
    #[arg(long)]
    pub no_carry_forward: bool,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, value_name = "FILE")]
    pub bundles: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write JSONL instead of the binary format.
    #[arg(long)]
    pub jsonl: bool,
}

/// Bundles plus optional precomputed embeddings.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_name = "FILE")]
    pub bundles: PathBuf,
    /// Embedding file keyed by bundle; hashed features are used when absent.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// multitask, adapter-multitask, single:<task> or adapter-single:<task>.
    #[arg(long)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Checkpoint whose trunk initializes this model.
    #[arg(long, value_name = "CKPT")]
    pub init_trunk: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Evaluate this checkpoint on all bundles instead of running trials.
    #[arg(long, value_name = "CKPT")]
    pub model: Option<PathBuf>,
    /// Number of trial seeds (0, 1, ...).
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Compare the adapter variants.
    #[arg(long)]
    pub adapter: bool,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub projections: Option<usize>,
    /// Slice dimensions, comma separated (e.g. `1,2,3,4`), cycled over slices.
    #[arg(long, value_delimiter = ',')]
    pub proj_dims: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also build clouds for each task's class 0.
    #[arg(long)]
    pub include_class0: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Bundles whose features are the benchmark inputs; a synthetic corpus
    /// is generated when absent.
    #[arg(long, value_name = "FILE")]
    pub bundles: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Benchmark the adapter variants.
    #[arg(long)]
    pub adapter: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().lines().next().unwrap_or_default().to_string());
            let _ = e.print();
            eprintln!("{}", err.record());
            return ExitCode::from(err.code());
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.record());
            ExitCode::from(err.code())
        }
    }
}
