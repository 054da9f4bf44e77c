//! `msa` — estimate per-unit Shapley contributions for lesionable games
//! and derive the downstream analytics (distribution indices, similarity
//! matrices, lesion sweeps, contribution clustering, SVG reports).
//!
//! Exit codes: 0 success, 2 usage/configuration errors (including
//! unreadable or malformed inputs), 3 runtime evaluation failures.

mod commands;
mod gamesrc;
mod manifest;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing files, malformed inputs. Exit 2.
    Config(String),
    /// Failures while evaluating games or writing outputs. Exit 3.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn config(err: impl fmt::Display) -> Self {
        CliError::Config(err.to_string())
    }

    pub fn runtime(err: impl fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "msa", version, about = "Shapley-based attribution for lesionable model units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-player Shapley Modes for a game
    Attribute(AttributeArgs),
    /// Index of distributed computation per function column
    Idc(IdcArgs),
    /// Inter-function similarity matrix from a contribution matrix
    Similarity(SimilarityArgs),
    /// Build a player similarity graph and find Louvain communities
    Cluster(ClusterArgs),
    /// Re-evaluate a game while lesioning ranked contributors
    LesionSweep(LesionSweepArgs),
    /// Correlate weight magnitude with Shapley importance for an MLP
    WeightImportance(WeightImportanceArgs),
    /// Render contribution / similarity heatmaps as SVG
    Report(ReportArgs),
}

/// Where the game comes from: a builtin spec, a coalition table, or an
/// MLP weight file with a dataset.
#[derive(Args, Clone)]
pub struct GameSourceArgs {
    /// Builtin game: `glove`, `glove:0,1/2`, `additive:2,5,3`, `majority:2@3`
    #[arg(long, value_name = "SPEC")]
    game: Option<String>,
    /// Coalition-table CSV (header `coalition,v0[,v1,...]`)
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// MLP weight file (JSON); requires --dataset
    #[arg(long, value_name = "FILE")]
    weights: Option<PathBuf>,
    /// Labeled dataset CSV (header `f0,...,f{d-1},label`); requires --weights
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct PlanArgs {
    /// Sampled orderings p (forces Monte Carlo when given)
    #[arg(long, value_name = "P")]
    permutations: Option<usize>,
    /// Seed for the permutation stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: MSA_WORKERS or the available parallelism)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Force exact enumeration (errors above the player cap)
    #[arg(long)]
    exact: bool,
    /// Player cap for exact enumeration
    #[arg(long, default_value_t = msa::engine::DEFAULT_EXACT_CAP, value_name = "N")]
    exact_cap: usize,
    /// Capacity of the opt-in per-worker LRU evaluation cache
    #[arg(long, value_name = "N")]
    cache: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Args, Clone)]
pub struct OutputArgs {
    /// Output directory (created if missing); outputs go nowhere else
    #[arg(long, default_value = "msa-out", value_name = "DIR")]
    out: PathBuf,
    /// Restrict output formats (default: every format the command produces)
    #[arg(long, value_delimiter = ',', value_name = "FMT[,FMT]")]
    format: Vec<Format>,
}

#[derive(Args)]
struct AttributeArgs {
    #[command(flatten)]
    source: GameSourceArgs,
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct IdcArgs {
    /// Contribution matrix CSV (header `player,<function_0>,...`)
    contributions: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimilarityArgs {
    /// Contribution matrix CSV (header `player,<function_0>,...`)
    contributions: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ClusterArgs {
    /// Result document from `attribute` (player modes become the graph)
    #[arg(long, value_name = "FILE", conflicts_with = "graph")]
    result: Option<PathBuf>,
    /// Edge-list CSV `i,j,weight` to cluster directly
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Modularity resolution (1.0 = classic)
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    /// Zero out similarity edges below this weight
    #[arg(long, default_value_t = 0.0, value_name = "W")]
    threshold: f64,
    /// Optional game source: when present, each community is also
    /// lesioned as a block and the values are written out
    #[command(flatten)]
    source: GameSourceArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct LesionSweepArgs {
    #[command(flatten)]
    source: GameSourceArgs,
    /// Result document from `attribute` providing the ranking
    #[arg(long, value_name = "FILE")]
    result: PathBuf,
    /// Output element to rank by (default: the last element)
    #[arg(long, value_name = "IDX")]
    element: Option<usize>,
    /// Lesion counts, ascending (e.g. `--ks 0,8,16`)
    #[arg(long, value_delimiter = ',', required = true, value_name = "K[,K]")]
    ks: Vec<usize>,
    /// Which end of the ranking to lesion first
    #[arg(long, value_enum, default_value_t = OrderArg::TopFirst)]
    order: OrderArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    TopFirst,
    BottomFirst,
}

impl From<OrderArg> for msa::analysis::SweepOrder {
    fn from(order: OrderArg) -> Self {
        match order {
            OrderArg::TopFirst => msa::analysis::SweepOrder::TopFirst,
            OrderArg::BottomFirst => msa::analysis::SweepOrder::BottomFirst,
        }
    }
}

#[derive(Args)]
struct WeightImportanceArgs {
    /// MLP weight file (JSON)
    #[arg(long, value_name = "FILE")]
    weights: PathBuf,
    /// Result document from `attribute` over the same model
    #[arg(long, value_name = "FILE")]
    result: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Contribution matrix CSV to render as a heatmap
    #[arg(long, value_name = "FILE")]
    contributions: Option<PathBuf>,
    /// Similarity matrix CSV to render as a heatmap
    #[arg(long, value_name = "FILE")]
    similarity: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Attribute(args) => commands::attribute(args.source, args.plan, args.output),
        Command::Idc(args) => commands::idc(args.contributions, args.output),
        Command::Similarity(args) => commands::similarity(args.contributions, args.output),
        Command::Cluster(args) => commands::cluster(
            args.result,
            args.graph,
            args.seed,
            args.resolution,
            args.threshold,
            args.source,
            args.output,
        ),
        Command::LesionSweep(args) => commands::lesion_sweep(
            args.source,
            args.result,
            args.element,
            args.ks,
            args.order.into(),
            args.output,
        ),
        Command::WeightImportance(args) => {
            commands::weight_importance(args.weights, args.result, args.output)
        }
        Command::Report(args) => {
            commands::report(args.contributions, args.similarity, args.output)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}
