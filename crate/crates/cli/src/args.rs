use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use shardcalc::{Method, Rate};

use crate::table::Format;

#[derive(Debug, Parser)]
#[command(name = "shardcalc", version, about = "Failure probabilities for random committee partitions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Failure probability by one or more methods.
    Delta(DeltaArgs),
    /// Chernoff-type and union bounds side by side.
    Bounds(BoundsArgs),
    /// Saddle-point asymptotic with its internals.
    Asymptotic(AsymptoticArgs),
    /// Committee count for a node budget, or committee size for a count.
    Size(SizeArgs),
    /// Tables over a range of committee counts.
    Sweep(SweepArgs),
    /// Monte Carlo estimate.
    Simulate(SimulateArgs),
}

/// Layout, adversaries and threshold shared by the point queries.
#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    /// Total number of nodes, split as evenly as possible.
    #[arg(long, requires = "committees", conflicts_with = "layout")]
    pub nodes: Option<u64>,
    #[arg(long, requires = "nodes")]
    pub committees: Option<u64>,
    /// Explicit committee sizes, e.g. `5,5`.
    #[arg(long, value_delimiter = ',')]
    pub layout: Option<Vec<u64>>,
    /// Adversarial fraction `P`; exact-model methods use `round(N P)` nodes.
    #[arg(long, conflicts_with = "adversary_count")]
    pub adversary_frac: Option<Rate>,
    /// Exact adversary count `M`; average-model methods use `P = M / N`.
    #[arg(long)]
    pub adversary_count: Option<u64>,
    /// Tolerated fraction `A`, decimal or `p/q`.
    #[arg(long)]
    pub threshold: Rate,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to a file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeltaArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AsymptoticArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Average,
    Exact,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    /// Node budget for the committee-count search.
    #[arg(long, required_unless_present = "min_n_for_k")]
    pub nodes: Option<u64>,
    /// Target failure probability.
    #[arg(long)]
    pub delta: Rate,
    #[arg(long)]
    pub threshold: Rate,
    #[arg(long)]
    pub adversary_frac: Rate,
    /// Solve for the smallest committee size at this committee count instead.
    #[arg(long = "min-n-for-K", alias = "min-n-for-k", conflicts_with = "nodes")]
    pub min_n_for_k: Option<u64>,
    /// Adversary model for the committee-size solve.
    #[arg(long, value_enum, default_value_t = Model::Average)]
    pub model: Model,
    /// Largest K with delta under target over every K, rather than the
    /// first-exceedance search.
    #[arg(long, conflicts_with = "min_n_for_k")]
    pub exhaustive: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep configuration; the flags below describe a sweep inline.
    #[arg(long, conflicts_with_all = ["mode", "nodes", "k_range", "threshold", "adversary_frac", "delta", "methods"])]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub mode: Option<crate::sweep::SweepMode>,
    #[arg(long)]
    pub nodes: Option<u64>,
    /// Committee counts `start:end[:step]`, inclusive.
    #[arg(long, required_unless_present = "config")]
    pub k_range: Option<String>,
    #[arg(long, required_unless_present = "config")]
    pub threshold: Option<Rate>,
    #[arg(long, required_unless_present = "config")]
    pub adversary_frac: Option<Rate>,
    /// Target failure probability (committee-size sweeps).
    #[arg(long)]
    pub delta: Option<Rate>,
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    pub methods: Vec<Method>,
    /// Adversary models simulated by `monte-carlo`.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub adversary_modes: Vec<Model>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the configured format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides the configured output path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Defaults to exact when `--adversary-count` is given, average otherwise.
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}
