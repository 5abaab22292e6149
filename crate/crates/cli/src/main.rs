//! `lossylab`: rate-distortion, one-shot coding, log-loss equivalence and
//! successive-refinement reports from the command line.
//!
//! Exit codes: 0 success, 1 infeasible or degenerate instance (or a solver
//! failure on it), 2 input error.

mod commands;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use lossylab::Error;
use thiserror::Error as ThisError;

use commands::{Context, EquivArgs, OneshotArgs, RdArgs, SrArgs, TimeshareArgs};
use report::Units;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Write { .. } => 2,
            CliError::Core(e) => match e {
                Error::Infeasible { .. }
                | Error::InfeasibleTarget(_)
                | Error::Degenerate(_)
                | Error::NonConvergence { .. }
                | Error::Numeric(_) => 1,
                Error::InvalidDistribution(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidProblem(_)
                | Error::InvalidArgument(_)
                | Error::ZeroProbability(_)
                | Error::TooLarge(_)
                | Error::UnmatchedRow { .. }
                | Error::PrunedColumn { .. } => 2,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// JSON report.
    Report,
    /// Comma-separated table with a header row.
    Table,
}

#[derive(Debug, Parser)]
#[command(
    name = "lossylab",
    version,
    about = "Finite-alphabet lossy compression toolkit"
)]
struct Cli {
    /// Solver tolerance on the achieved distortion.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,

    /// Seed for sampled and simulated quantities.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Report)]
    format: Format,

    /// Display information quantities in bits (inputs stay in nats).
    #[arg(long, global = true)]
    bits: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate-distortion point or curve with tilted information.
    Rd(RdArgs),
    /// Optimal single-shot codes.
    Oneshot(OneshotArgs),
    /// The equivalent log-loss problem and its identity checks.
    Equiv(EquivArgs),
    /// Successive-refinement construction with a log-loss first stage.
    Sr(SrArgs),
    /// Seeded time-sharing simulation under log loss.
    Timeshare(TimeshareArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if !(cli.tol > 0.0) || !cli.tol.is_finite() {
        return Err(CliError::Input(format!(
            "--tol must be positive, got {}",
            cli.tol
        )));
    }
    let ctx = Context {
        tol: cli.tol,
        seed: cli.seed,
        units: Units { bits: cli.bits },
    };
    let start = Instant::now();
    let report = match &cli.command {
        Command::Rd(a) => commands::cmd_rd(a, &ctx)?,
        Command::Oneshot(a) => commands::cmd_oneshot(a, &ctx)?,
        Command::Equiv(a) => commands::cmd_equiv(a, &ctx)?,
        Command::Sr(a) => commands::cmd_sr(a, &ctx)?,
        Command::Timeshare(a) => commands::cmd_timeshare(a, &ctx)?,
    };
    let text = match cli.format {
        Format::Report => report.render_json(start.elapsed().as_secs_f64()),
        Format::Table => report.render_table(),
    };
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
