//! Command-line harness for the svolfc volatility forecasting toolkit.
//!
//! The pipeline runs as: `returns` turns a price CSV into percent log
//! returns, `estimate` fits the model offline on a training window,
//! `filter` runs one online algorithm over a returns file, `compare` turns
//! several record streams into cumulative-evidence and relative-evidence
//! tables, and `replicate-posteriors` measures how online posterior
//! approximations spread around an offline reference.

mod commands;
mod config;
mod theta;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "svolfc",
    version,
    about = "Particle-filter volatility forecasting toolkit",
    propagate_version = true
)]
struct Cli {
    /// Plain-text key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections (affects speed only, never
    /// results).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a price CSV (date,adj_close) into percent log returns.
    Returns(commands::ReturnsArgs),
    /// Estimate model parameters offline on a training window.
    Estimate(commands::EstimateArgs),
    /// Run one online filter over a returns file.
    Filter(commands::FilterArgs),
    /// Compare record streams from several filter runs.
    Compare(commands::CompareArgs),
    /// Rerun the online parameter learners and persist their final clouds
    /// next to an offline reference sample set.
    ReplicatePosteriors(commands::ReplicateArgs),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = config::FileConfig::load(cli.config.as_deref())?;
    if let Some(threads) = file.resolve_opt(cli.threads, "threads")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("failed to size the worker pool")?;
    }
    match cli.command {
        Command::Returns(args) => commands::cmd_returns(args, &file),
        Command::Estimate(args) => commands::cmd_estimate(args, &file),
        Command::Filter(args) => commands::cmd_filter(args, &file),
        Command::Compare(args) => commands::cmd_compare(args, &file),
        Command::ReplicatePosteriors(args) => commands::cmd_replicate_posteriors(args, &file),
    }
}
