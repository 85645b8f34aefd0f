//! Command-line entry point for flux-transport and assimilation runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sunflux_core::assim::Method;
use sunflux_core::config::{parse_config, RunConfig};
use sunflux_core::error::Error;
use sunflux_core::runner::{run_compare, run_osse, run_simulate};

#[derive(Parser)]
#[command(
    name = "sunflux",
    version,
    about = "Global photospheric flux transport with ensemble data assimilation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Free-running ensemble simulation; writes mean/std maps and a
    /// checkpoint.
    Simulate(RunArgs),
    /// Twin experiment against a hidden truth with synthetic observations.
    Osse(RunArgs),
    /// Twin experiment running the baseline and all three methods on one
    /// observation sequence.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`key = value` lines); defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Analysis method override.
    #[arg(long, value_parser = ["enls", "etkf", "letkf", "none"])]
    method: Option<String>,

    /// Inflation factor override.
    #[arg(long)]
    rho: Option<f64>,

    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Override the number of observation epochs (duration becomes
    /// steps * obs_cadence_seconds).
    #[arg(long)]
    steps: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(method) = &self.method {
            cfg.method = match method.as_str() {
                "none" => None,
                other => Some(other.parse::<Method>()?),
            };
        }
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(steps) = self.steps {
            cfg.duration_seconds = steps as f64 * cfg.obs_cadence_seconds;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => run_simulate(&args.resolve()?, &args.out),
        Command::Osse(args) => run_osse(&args.resolve()?, &args.out),
        Command::Compare(args) => run_compare(&args.resolve()?, &args.out),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("sunflux: {err}");
            match err {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
