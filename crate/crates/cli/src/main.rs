//! `bmlasso`: solve, certify, build counterexamples, evaluate the landscape
//! theory, and run rank sweeps.

mod commands;
mod config;
mod output;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{CertifyArgs, CounterexampleArgs, SolveArgs, TheoryArgs, ThresholdArgs};
use crate::sweep::SweepArgs;

#[derive(Parser)]
#[command(name = "bmlasso", version, about = "Nonconvex Burer-Monteiro matrix LASSO toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical thresholds, effective strong convexity and error bounds.
    Theory(TheoryArgs),
    /// Build and verify an instance with a spurious critical point.
    Counterexample(CounterexampleArgs),
    /// Run a local solver on a Gaussian or stored instance.
    Solve(SolveArgs),
    /// Second-order certificate of a stored point.
    Certify(CertifyArgs),
    /// Search-rank sweep over random Gaussian instances.
    Sweep(SweepArgs),
    /// Hessian sign of the condition-number family across its critical value.
    ThresholdSweep(ThresholdArgs),
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// A scientific check did not pass: exit 1.
    Check(String),
    /// Anything else: exit 1.
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<bmlasso::Error> for Failure {
    fn from(e: bmlasso::Error) -> Self {
        match e {
            bmlasso::Error::InvalidParameter(_) | bmlasso::Error::Dimension(_) => Failure::Usage(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Theory(a) => commands::theory(a),
        Command::Counterexample(a) => commands::counterexample(a),
        Command::Solve(a) => commands::solve(a),
        Command::Certify(a) => commands::certify(a),
        Command::Sweep(a) => sweep::run(a),
        Command::ThresholdSweep(a) => commands::threshold_sweep(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
