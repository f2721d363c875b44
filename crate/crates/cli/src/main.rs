//! `sphb`: robust constructive-interference precoding from the command line.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, Format, Overrides};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sphb", version, about = "Sphere-bounding robust CI precoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design a precoder for one channel realization.
    Solve(RunArgs),
    /// Evaluate schemes over random channels and SNR targets.
    Sweep(RunArgs),
    /// Run the built-in analytic checks.
    Selftest {
        /// Inflate the named check's error (exercises failure reporting).
        #[arg(long, hide = true)]
        perturb: Option<String>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config, or a previous run's manifest.json to replay it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Measure achieved probabilities by sampling inside the iteration.
    #[arg(long)]
    mc_probability: bool,
    /// Move adjusted targets in the direction of the probability surplus.
    #[arg(long)]
    negate_relaxation: bool,
}

impl RunArgs {
    fn config(&self) -> Result<Config, CliError> {
        let mut cfg = Config::load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            mc_probability: self.mc_probability,
            negate_relaxation: self.negate_relaxation,
        });
        cfg.validate()?;
        if self.workers == Some(0) {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => {
            let cfg = a.config()?;
            sphb_core::par::with_workers(a.workers, || commands::solve(&cfg))?
        }
        Command::Sweep(a) => {
            let cfg = a.config()?;
            commands::sweep(&cfg, a.workers)
        }
        Command::Selftest { perturb } => commands::selftest(perturb.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sphb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
