//! `mixmono` command-line tool.
//!
//! Exit codes: 0 success, 2 invalid input, 3 computation failure.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] mixmono::Error),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(mixmono::Error::Io(_) | mixmono::Error::Json(_)) => 2,
            CliError::Core(_) | CliError::Compute(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "mixmono", version, about = "Interval enclosures, reach tubes, set inversion and interval observers")]
pub struct Cli {
    /// Seed for every sampling-based report.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Sample count for oracle ranges and Monte-Carlo checks.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enclose the range of a map over a box with one or more methods.
    Range(commands::RangeArgs),
    /// Compute reach tubes of a model.
    Reach(commands::ReachArgs),
    /// Shrink a prior box against an interval constraint.
    Invert(commands::InvertArgs),
    /// Run the interval observer on a measurement file.
    Observe(commands::ObserveArgs),
    /// Compare methods on a model by final-step widths.
    Compare(commands::CompareArgs),
    /// Simulate seeded point trajectories and noisy measurements.
    Simulate(commands::SimulateArgs),
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("MIXMONO_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Invalid(format!("MIXMONO_THREADS must be a positive integer, got '{v}'")))?;
        // Ignore the error when a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| commands::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
