//! `reservoir-smpc`: experiment runner for scenario-based reservoir MPC.
//!
//! Exit status: 0 on success, 1 when a computation fails, 2 for bad flags,
//! configuration or input files.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{FitArgs, ForecastArgs, MonteCarloArgs, ReplayArgs, RunArgs, SynthArgs};

#[derive(Debug, Parser)]
#[command(name = "reservoir-smpc", version, about = "Scenario-based MPC for water reservoirs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic hourly inflow record plus a matching reservoir config.
    Synth(SynthArgs),
    /// Fit the additive inflow model to a training window.
    Fit(FitArgs),
    /// Sample an H×K scenario matrix from a fitted model.
    Forecast(ForecastArgs),
    /// Run one policy in closed loop over a simulation window.
    Run(RunArgs),
    /// Compare policies over Monte Carlo inflow replicates.
    Montecarlo(MonteCarloArgs),
    /// Re-run an experiment from its manifest.
    Replay(ReplayArgs),
}

/// A problem with the command line or configuration that is not reported
/// by the library itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Bail out with exit status 2.
#[macro_export]
macro_rules! usage {
    ($($arg:tt)*) => {
        return Err(anyhow::Error::new($crate::UsageError(format!($($arg)*))))
    };
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<reservoir_smpc::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

/// Size the worker pool from `REPO_THREADS` (unset or 0 = one per core).
fn configure_threads() -> anyhow::Result<()> {
    let threads = match std::env::var("REPO_THREADS") {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => usage!("REPO_THREADS must be a non-negative integer, got `{raw}`"),
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Forecast(a) => commands::forecast(&a),
        Command::Run(a) => commands::run(&a),
        Command::Montecarlo(a) => commands::montecarlo(&a),
        Command::Replay(a) => commands::replay(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
