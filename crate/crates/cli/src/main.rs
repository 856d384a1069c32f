//! `sharing-effects`: simulate sharing chains, estimate treatment effects
//! from session logs, run MSE sweeps and plot them.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sharing_effects::EstimatorKind;

use error::CliError;

/// Tool version followed by the on-disk format version.
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (format v1)");

#[derive(Debug, Parser)]
#[command(name = "sharing-effects", version = VERSION, about = "Treatment-effect estimation for sharing chains")]
struct Cli {
    /// Worker threads for sampling and sweeps. Output does not depend on it.
    #[arg(long, global = true, env = "SHARING_EFFECTS_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample trajectories under the production policy and write a session log.
    Simulate(SimulateArgs),
    /// Estimate pairwise treatment effects from a session log.
    Estimate(EstimateArgs),
    /// Run the MSE sweep described by the config's [sweep] section.
    Sweep(SweepArgs),
    /// Render one SVG error plot per variant pair from a sweep directory.
    Report(ReportArgs),
    /// Regenerate an output from the manifest embedded in (or next to) it.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Number of trajectories.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Ship this variant to every session instead of sampling from the policy.
    #[arg(long, value_name = "NAME")]
    pub constant: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Session log to read.
    #[arg(long)]
    pub log: PathBuf,
    /// Experiment file whose [[variants]] give the logging policy.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = EstimatorKind::ALL)]
    pub estimators: Vec<EstimatorKind>,
    /// Report destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed of the [sweep] section.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the tables and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub sweep_dir: PathBuf,
    /// Directory for the SVG files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A session log, ATE report, SVG plot or sweep manifest.json.
    #[arg(long)]
    pub from: PathBuf,
    /// Where to write the regenerated output (file or directory, as the
    /// original command wrote).
    #[arg(long)]
    pub out: PathBuf,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let workers = cli.workers.map(|w| w as usize).unwrap_or_else(default_workers);
    let argv: Vec<String> = std::env::args().collect();
    let ctx = commands::Context { workers, argv };
    match cli.command {
        Command::Simulate(args) => commands::simulate(&ctx, &args),
        Command::Estimate(args) => commands::estimate(&ctx, &args),
        Command::Sweep(args) => commands::sweep(&ctx, &args),
        Command::Report(args) => commands::report(&ctx, &args),
        Command::Replay(args) => commands::replay(&ctx, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
