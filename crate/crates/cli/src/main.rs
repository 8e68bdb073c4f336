mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{merge, RunConfig, OUT_ENV};
use error::CliError;

/// Koopman and Perron-Frobenius approximations with error certificates.
#[derive(Parser)]
#[command(name = "koopcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Invocation {
    /// JSON config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

#[derive(Subcommand)]
enum Command {
    /// Sample snapshot pairs from a benchmark system.
    Simulate(Invocation),
    /// Validate a CSV file and store it as snapshots.
    Ingest(Invocation),
    /// Build an EDMD system from snapshots and a dictionary.
    Edmd(Invocation),
    /// Build a kernel EDMD system for the Perron-Frobenius operator.
    Kedmd(Invocation),
    /// Principal angles between the subspace and its image.
    Angles(Invocation),
    /// Reduce a system to its smallest-angle principal observables.
    Pad(Invocation),
    /// Strict multi-step error bounds for one observable.
    Bounds(Invocation),
    /// Expected error bounds from a Gaussian surrogate.
    Expected(Invocation),
    /// Learn the scale and order of a Matérn dictionary.
    Tune(Invocation),
    /// Forecast an observable with bound columns attached.
    Predict(Invocation),
}

impl Command {
    fn parts(&self) -> (&'static str, &Invocation) {
        match self {
            Command::Simulate(i) => ("simulate", i),
            Command::Ingest(i) => ("ingest", i),
            Command::Edmd(i) => ("edmd", i),
            Command::Kedmd(i) => ("kedmd", i),
            Command::Angles(i) => ("angles", i),
            Command::Pad(i) => ("pad", i),
            Command::Bounds(i) => ("bounds", i),
            Command::Expected(i) => ("expected", i),
            Command::Tune(i) => ("tune", i),
            Command::Predict(i) => ("predict", i),
        }
    }
}

fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let (name, inv) = cli.command.parts();
    let cfg = merge(name, inv.config.as_deref(), &inv.flags)?;
    let out = cfg.out.clone().ok_or_else(|| CliError::config("out", format!("required (or set {OUT_ENV})")))?;
    commands::run(name, &cfg, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(manifest) => {
            log::info!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("koopcert: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
