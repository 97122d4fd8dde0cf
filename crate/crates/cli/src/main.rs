//! `mbadmm`: run the multi-block scheme on problem files, report penalty
//! ranges, and analyse iteration matrices.
//!
//! Exit codes: 0 success (or converged), 1 runtime error, 2 iteration budget
//! exhausted, 3 diverged, 64 malformed command line.

mod beta_range;
mod reproduce;
mod solve;
mod spectral_cmd;
mod sweep;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use util::{UsageError, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "mbadmm", version, about = "Multi-block ADMM: solver, penalty ranges, divergence analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme on a problem file.
    Solve(solve::SolveArgs),
    /// Print the guaranteed penalty ranges of a problem file.
    BetaRange(beta_range::BetaRangeArgs),
    /// Spectral radius of the closed-form iteration matrix.
    Spectral(spectral_cmd::SpectralArgs),
    /// Run the scheme over a grid of penalty values.
    Sweep(sweep::SweepArgs),
    /// Recompute one of the embedded divergence examples.
    Reproduce(reproduce::ReproduceArgs),
    /// Check a problem file and print its structural report.
    Validate(beta_range::ValidateArgs),
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Solve(a) => solve::run(&a),
        Command::BetaRange(a) => beta_range::run(&a),
        Command::Spectral(a) => spectral_cmd::run(&a),
        Command::Sweep(a) => sweep::run(&a),
        Command::Reproduce(a) => reproduce::run(&a),
        Command::Validate(a) => beta_range::run_validate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) if util::is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {}", e);
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
