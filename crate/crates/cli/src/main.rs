//! Scenario-driven command-line runner for the curvature lattice laboratory.
//!
//! Invocation: `crlab <scenario> --config <path.json> [--out <path.json>]
//! [--csv <path.csv>] [--threads <k>]`. The scenario subcommand must match
//! the `scenario.kind` field of the configuration.
//!
//! Exit codes: 0 success, 2 solver non-convergence, 3 invalid
//! configuration, 4 assertion or certification failure.

mod config;
mod report;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::scenarios::{run_scenario, RunError};

#[derive(Parser)]
#[command(
    name = "crlab",
    version,
    about = "Prescribed-curvature numerical laboratory on a Heisenberg quotient lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// First eigenvalue and positive eigenfield of the structure
    Spectral(RunArgs),
    /// Quotient minimization and sign cross-check
    Yamabe(RunArgs),
    /// Monotone solve of the prescribed-curvature equation
    Solve(RunArgs),
    /// Manufactured-solution roundtrip through both solvers
    Manufacture(RunArgs),
    /// Sign classification with eigenvalue/quotient cross-validation
    Trichotomy(RunArgs),
    /// Necessary conditions in the vanishing-curvature class
    Necessary(RunArgs),
    /// Certify a curvature-equivalence candidate
    #[command(name = "certify-ce")]
    CertifyCe(RunArgs),
    /// Discretization convergence table for the sub-Laplacian
    Convergence(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON report here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-iteration CSV table here (solver and convergence scenarios)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker threads (accepted for interface compatibility; kernels are
    /// sequential and reproducible for any value)
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::Spectral(_) => "spectral",
            Command::Yamabe(_) => "yamabe",
            Command::Solve(_) => "solve",
            Command::Manufacture(_) => "manufacture",
            Command::Trichotomy(_) => "trichotomy",
            Command::Necessary(_) => "necessary",
            Command::CertifyCe(_) => "certify-ce",
            Command::Convergence(_) => "convergence",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Spectral(a)
            | Command::Yamabe(a)
            | Command::Solve(a)
            | Command::Manufacture(a)
            | Command::Trichotomy(a)
            | Command::Necessary(a)
            | Command::CertifyCe(a)
            | Command::Convergence(a) => a,
        }
    }
}

const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_INVALID_CONFIG: u8 = 3;
const EXIT_ASSERTION_FAILURE: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = cli.command.kind();
    let args = cli.command.args();
    match execute(kind, args) {
        Ok(code) => code,
        Err(RunError::Config(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(EXIT_INVALID_CONFIG)
        }
        Err(RunError::NoConvergence(msg)) => {
            eprintln!("no convergence: {msg}");
            ExitCode::from(EXIT_NO_CONVERGENCE)
        }
    }
}

fn execute(kind: &str, args: &RunArgs) -> Result<ExitCode, RunError> {
    if args.threads == 0 {
        return Err(RunError::Config("--threads must be at least 1".into()));
    }
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let raw_value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| RunError::Config(format!("malformed JSON: {e}")))?;
    let config: RunConfig = serde_json::from_str(&raw)
        .map_err(|e| RunError::Config(format!("schema violation: {e}")))?;
    if config.scenario.kind != kind {
        return Err(RunError::Config(format!(
            "subcommand '{kind}' does not match scenario.kind = '{}'",
            config.scenario.kind
        )));
    }

    let started = Instant::now();
    let mut outcome = run_scenario(&config, raw_value, args.threads)?;
    outcome.report.wall_clock_seconds = started.elapsed().as_secs_f64();

    outcome.report.print_summary();

    if let Some(path) = &args.out {
        let json =
            serde_json::to_string_pretty(&outcome.report).expect("report serializes to JSON");
        std::fs::write(path, json)
            .map_err(|e| RunError::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &args.csv {
        match &outcome.csv {
            Some(table) => std::fs::write(path, table)
                .map_err(|e| RunError::Config(format!("cannot write {}: {e}", path.display())))?,
            None => eprintln!("note: scenario '{kind}' produced no CSV table"),
        }
    }

    if outcome.report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_ASSERTION_FAILURE))
    }
}
