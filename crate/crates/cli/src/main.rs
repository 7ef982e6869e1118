//! Command-line entry point for the GNAR-HARX toolkit.
//!
//! Exit codes: 0 on success, 2 for configuration or input problems, 3 for
//! numerical or estimation failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gnarharx::error::Error;

#[derive(Parser)]
#[command(
    name = "gnarharx",
    version,
    about = "Network HAR models for realised-volatility forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in simulation configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel refits (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Align raw CSV inputs and derive the modelling series.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic dataset from a simulation config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run rolling-window backtests for every configured model.
    Backtest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rank previously written forecast files.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Edge counts and Jaccard similarity over a network trajectory.
    NetworkStats {
        /// Directory of dated network JSON files.
        #[arg(long)]
        networks: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Estimation(_)
        | Error::ZeroStd { .. }
        | Error::NotSymmetric { .. }
        | Error::InsufficientRows { .. } => 3,
        _ => 2,
    }
}

fn run(cli: &Cli) -> gnarharx::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Ingest { config } => {
            let cfg = config::load(config)?;
            commands::cmd_ingest(&cfg, &cli.out)
        }
        Command::Simulate { config } => {
            let cfg = config::load(config)?;
            commands::cmd_simulate(&cfg, &cli.out, cli.seed)
        }
        Command::Backtest { config } => {
            let cfg = config::load(config)?;
            commands::cmd_backtest(&cfg, &cli.out)
        }
        Command::Evaluate { config } => {
            let cfg = config::load(config)?;
            commands::cmd_evaluate(&cfg, &cli.out)
        }
        Command::NetworkStats { networks } => commands::cmd_network_stats(networks, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
