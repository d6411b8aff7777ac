//! `hgrw`: inspect, generate, train, rewire and diagnose heterogeneous graph
//! datasets.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hgrw_core::ErrorClass;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "hgrw", version, about = "Homophily-oriented rewiring of heterogeneous graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the schema, per-meta-path homophily and the graph's overall homophily.
    Inspect(InspectArgs),
    /// Write a synthetic planted-homophily dataset.
    Synth(SynthArgs),
    /// Train the similarity learner and write a checkpoint plus loss history.
    Train(TrainArgs),
    /// Rewire a dataset with a trained checkpoint.
    Rewire(RewireArgs),
    /// Write a homophily and complexity report for a dataset.
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Dataset directory.
    dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    max_path_len: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeatureFormatArg {
    Bin,
    Tsv,
}

impl From<FeatureFormatArg> for hgrw_core::io::FeatureFormat {
    fn from(f: FeatureFormatArg) -> Self {
        match f {
            FeatureFormatArg::Bin => Self::Binary,
            FeatureFormatArg::Tsv => Self::Tsv,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Target nodes.
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Same-class probability per target relation, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.3")]
    homophily: Vec<f64>,
    /// Sizes of auxiliary node types, comma separated.
    #[arg(long, value_delimiter = ',')]
    aux_sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    aux_homophily: f64,
    #[arg(long, default_value_t = 1)]
    aux_links: usize,
    #[arg(long, default_value_t = 4)]
    feature_dim: usize,
    #[arg(long, default_value_t = 10.0)]
    mean_degree: f64,
    /// Distance between class means.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Per-coordinate noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "bin")]
    feature_format: FeatureFormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LambdaScheduleArg {
    Step,
    Epoch,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory.
    dir: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV; defaults to the checkpoint path with `.loss.csv` appended.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Meta-path as comma-separated relation names; repeatable. Defaults to
    /// every anchored path up to --max-path-len.
    #[arg(long = "path")]
    paths: Vec<String>,
    #[arg(long, default_value_t = 2)]
    max_path_len: usize,
    #[arg(long, default_value_t = 2)]
    num_hops: usize,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 32)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 200)]
    epochs_attr: usize,
    #[arg(long, default_value_t = 30)]
    epochs_label: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1000)]
    k1: usize,
    #[arg(long, default_value_t = 1000)]
    k2: usize,
    /// Pair windows drawn per epoch.
    #[arg(long, default_value_t = 1)]
    windows_per_epoch: usize,
    #[arg(long, value_enum, default_value = "step")]
    lambda_schedule: LambdaScheduleArg,
    /// Train only the label term in the second phase.
    #[arg(long)]
    drop_attr_loss: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append neighborhood attribute distributions to the learned representations.
    #[arg(long)]
    concat_dist: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolArg {
    All,
    TwoHop,
}

#[derive(Debug, Args)]
struct RewireArgs {
    /// Dataset directory.
    dir: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    edge_budget: usize,
    #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, default_value_t = 256)]
    block_size: usize,
    #[arg(long, value_enum, default_value = "all")]
    candidate_pool: PoolArg,
    #[arg(long, value_enum, default_value = "bin")]
    feature_format: FeatureFormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Linear,
    Squared,
}

#[derive(Debug, Args)]
struct DiagArgs {
    /// Dataset directory.
    dir: PathBuf,
    /// JSON report to write.
    #[arg(long)]
    report: PathBuf,
    /// Original dataset; adds a before/after homophily comparison.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    max_path_len: usize,
    #[arg(long, value_enum, default_value = "linear")]
    variant: VariantArg,
    /// Norm order of the complexity measure.
    #[arg(long, default_value_t = 2.0)]
    norm: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hgrw_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HGRW_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("HGRW_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Inspect(a) => commands::inspect(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Rewire(a) => commands::rewire(&a),
        Command::Diag(a) => commands::diag(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
