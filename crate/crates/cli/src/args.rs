use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cos_core::{AdjustmentSet, QuantileMethod, Trial};

#[derive(Debug, Parser)]
#[command(name = "cos", version, about = "Effect estimation for clustered observational studies")]
pub struct Cli {
    /// Worker threads for bootstrap and Monte Carlo loops (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a target-trial population and write units.csv, clusters.csv, truth.csv.
    Simulate(SimulateArgs),
    /// G-formula estimate with cluster block bootstrap.
    Estimate(EstimateArgs),
    /// Standardized differences between treated and control clusters.
    Balance(BalanceArgs),
    /// Monte Carlo grid over trials, sizes, and adjustment sets.
    #[command(name = "replicate-table1")]
    ReplicateTable1(ReplicateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Pretty,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Target trial: 1, 2a, or 2b.
    #[arg(long)]
    pub trial: Trial,
    /// Number of clusters.
    #[arg(long)]
    pub m: usize,
    /// Number of units.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "linear")]
    pub quantile_method: QuantileMethod,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub units: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    /// TOML file with aggregate rules (see `levels`, `quantile_method`, `[aggregates]`).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Adjustment set(s): w, wh, whx. Several sets share bootstrap resamples.
    #[arg(long, required = true, value_delimiter = ',')]
    pub adjust: Vec<AdjustmentSet>,
    /// Append squares of continuous regressors.
    #[arg(long)]
    pub quadratic: bool,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Leave out the aggregate rows.
    #[arg(long)]
    pub no_aggregates: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 300)]
    pub boot: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict to these trials (default: all three).
    #[arg(long, value_delimiter = ',')]
    pub trial: Vec<Trial>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
