//! `ecc`: analytical and simulated performance of unslotted CSMA/CA.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ecc", version, about = "Event chains analysis of IEEE 802.15.4 unslotted CSMA/CA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the chain engine and print delivery ratio, latency and energy.
    Analyze(AnalyzeArgs),
    /// Run the Monte-Carlo simulator.
    Simulate(SimulateArgs),
    /// Exhaustively enumerate every joint backoff draw (tiny networks only).
    Enumerate(EnumerateArgs),
    /// Analyze over a range of one parameter, one row per point.
    Sweep(SweepArgs),
    /// Run analyze and simulate on the same model and test the deltas.
    Compare(CompareArgs),
    /// Inspection helpers.
    #[command(subcommand)]
    Debug(DebugCommand),
}

#[derive(Debug, Subcommand)]
enum DebugCommand {
    /// Print the CCA instants (symbols) of backoff stage `i`, attempt `j`.
    Lambda {
        i: usize,
        j: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F64,
    F32,
    Rational,
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of contending nodes.
    #[arg(short = 'n', long)]
    nodes: Option<u32>,
    /// Pruning threshold; 0 enumerates every chain.
    #[arg(long)]
    theta: Option<f64>,
    /// Engine worker threads; 0 uses every available core.
    #[arg(long, env = "ECC_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    min_be: Option<u8>,
    #[arg(long)]
    max_be: Option<u8>,
    #[arg(long)]
    max_backoffs: Option<u8>,
    #[arg(long)]
    max_retries: Option<u8>,
    /// Frame transmission time, symbols.
    #[arg(long)]
    d_tx: Option<u64>,
    #[arg(long, value_parser = ["lookahead", "one_step"])]
    conditioning: Option<String>,
    /// Largest number of chains the engine may examine.
    #[arg(long)]
    chain_cap: Option<u64>,
    /// Any other configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Clone, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write the main output here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Write the latency PDF (`t_ms,p`) to this file.
    #[arg(long)]
    pdf_out: Option<PathBuf>,
    /// Write one `p=<prob> [events]` line per finalised chain to this file.
    #[arg(long)]
    dump_chains: Option<PathBuf>,
    /// Report engine progress on stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 100_000)]
    runs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    pdf_out: Option<PathBuf>,
    /// Write the outcome histogram (`events,count,p`) to this file.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, value_enum, default_value_t = Precision::Rational)]
    precision: Precision,
    #[arg(long)]
    pdf_out: Option<PathBuf>,
    /// Write one `p=<prob> [events]` line per outcome to this file.
    #[arg(long)]
    dump_chains: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutputArgs,
    /// Configuration key to vary, e.g. `mac_min_be` or `n_nodes`.
    #[arg(long)]
    param: String,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    /// Use the simulator instead of the chain engine.
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 100_000)]
    runs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 1_000_000)]
    runs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Flag a delta as significant beyond this many standard errors.
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
}

/// Failure classes, mapped to distinct exit codes.
#[derive(Debug)]
enum Failure {
    Model(anyhow::Error),
    Comparison(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Model(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(&a).map_err(Failure::from),
        Command::Simulate(a) => commands::simulate(&a).map_err(Failure::from),
        Command::Enumerate(a) => commands::enumerate(&a).map_err(Failure::from),
        Command::Sweep(a) => commands::sweep(&a).map_err(Failure::from),
        Command::Compare(a) => commands::compare(&a),
        Command::Debug(DebugCommand::Lambda { i, j, model }) => {
            commands::debug_lambda(&model, i, j).map_err(Failure::from)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Comparison(msg)) => {
            eprintln!("comparison failed: {msg}");
            ExitCode::from(3)
        }
    }
}
