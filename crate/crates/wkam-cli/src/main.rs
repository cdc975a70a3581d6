//! `wkam` — command-line front end for the whiskered-torus solver.
//!
//! Four subcommands share one JSON config (see [`config::RunConfig`]):
//!
//! * `verify`   — cross-check the family's Jacobians against the declared
//!   conformal factor;
//! * `solve`    — Newton-solve the invariance equation, write the torus
//!   state and a per-iteration convergence CSV;
//! * `scan`     — raster a complex perturbation disk and classify each cell
//!   as predicted member or excluded;
//! * `continue` — follow the torus along a path of real coupling strengths,
//!   one state file per converged leg.
//!
//! Exit codes are part of the contract: 0 success, 1 config error, 2
//! verification failure, 3 solve failure, 4 continuation breakdown.  All
//! artifacts are written atomically (temp file + rename) and contain no
//! timestamps, so identical runs produce identical bytes.

mod config;
mod runs;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wkam", version, about = "Whiskered tori of conformally symplectic maps")]
pub struct Cli {
    /// Run configuration (JSON).  Required by every subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for the scan raster.  Default: all cores.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Output directory (created if missing).  Default: current directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Seed `solve` from a previously written state file instead of the
    /// built-in analytic seed.
    #[arg(long, global = true, value_name = "PATH")]
    pub resume: Option<PathBuf>,

    /// Per-iteration progress on stderr.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Check the map family against its declared conformal factor.
    Verify,
    /// Solve the invariance equation and write the torus state.
    Solve,
    /// Raster the complex perturbation disk for predicted members.
    Scan,
    /// Continue the torus along the configured path of coupling strengths.
    Continue,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Solve => "solve",
            Command::Scan => "scan",
            Command::Continue => "continue",
        }
    }
}

/// Everything that can go wrong, sorted by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unusable config, CLI arguments, or input/output files.
    Config(String),
    /// The family failed a verification check.
    Verification(String),
    /// The Newton solve did not converge.
    Solve(wkam::Error),
    /// A continuation leg failed; `eps` names the failing leg.
    Continuation { eps: f64, source: wkam::Error },
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Solve(_) => 3,
            Failure::Continuation { .. } => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "{msg}"),
            Failure::Verification(msg) => write!(f, "verification failed: {msg}"),
            Failure::Solve(err) => {
                write!(f, "solve failed: {err}")?;
                write_chain(f, err)
            }
            Failure::Continuation { eps, source } => {
                write!(f, "continuation failed at eps = {eps}: {source}")?;
                write_chain(f, source)
            }
        }
    }
}

/// Append the full cause chain, so e.g. a failed step also names the
/// sub-solver that broke.
fn write_chain(f: &mut fmt::Formatter<'_>, err: &wkam::Error) -> fmt::Result {
    let mut source = std::error::Error::source(err);
    while let Some(cause) = source {
        write!(f, ": {cause}")?;
        source = cause.source();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap's own exit codes clash with ours; help/version stay 0,
            // every usage error becomes a config error.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match runs::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
