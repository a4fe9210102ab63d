//! `restore`: plan, verify and stress-test critical-load restoration.

mod commands;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Process exit codes. Each run ends in exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    InputError = 1,
    Infeasible = 2,
    Limit = 3,
    VerificationFailed = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// Built-in branch-and-bound.
    Embedded,
    /// Write `model.mps` and stop.
    MpsExport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "restore",
    version,
    about = "Critical-load restoration planning for damaged feeders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Feeder description (JSON).
    #[arg(long, global = true)]
    pub feeder: Option<PathBuf>,
    /// Damage scenario (JSON); defaults to an undamaged feeder.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the restoration problem and verify the plan.
    Solve {
        #[arg(long, value_enum, default_value_t = Solver::Embedded)]
        solver: Solver,
        /// Read variable values from this file instead of solving.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Stop branch-and-bound after this many nodes.
        #[arg(long)]
        node_limit: Option<u64>,
        /// Stop branch-and-bound after this many seconds.
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Audit a plan file against the feeder.
    Verify {
        /// Plan file; defaults to OUT/plan.json.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Also run a Monte Carlo survival estimate with this many trials.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Solve once per equity tolerance, smallest first.
    SweepEps {
        /// Comma-separated tolerances in hours.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Stop at the first feasible tolerance.
        #[arg(long)]
        first_feasible: bool,
    },
    /// Monte Carlo survival of every network in a plan.
    Mc {
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Use this failure probability for every line.
        #[arg(long)]
        q_override: Option<f64>,
    },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("RESTORE_LOG", "warn");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() {
                Exit::InputError as u8
            } else {
                0
            });
        }
    };
    init_logging();
    match commands::run(&cli) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(Exit::InputError as u8)
        }
    }
}
