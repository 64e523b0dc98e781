//! `deconv`: simulation, estimation, adaptive selection, conjecture figures, bound checks
//! and Monte Carlo experiments from JSON configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deconv_core::cli_io::{
    adapt_cmd, bounds_cmd, conjecture_cmd, estimate_cmd, example_config, exit_code, experiment_cmd, init_threads,
    load_config, simulate, RunDir,
};
use deconv_core::error::Result;

#[derive(Parser)]
#[command(name = "deconv", version, about = "Deconvolution with unknown noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Run directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples from a scenario.
    Simulate(Io),
    /// Estimate the signal CF and density from a sample CSV.
    Estimate(Io),
    /// Select kappa over a grid and report the selected estimate.
    Adapt(Io),
    /// Weighted-polynomial profiles, summary statistics and the optional two-point instance.
    Conjecture(Io),
    /// Check the quantitative bounds over a parameter lattice.
    BoundsCheck(Io),
    /// Run a replicated experiment plan.
    Experiment(Io),
    /// Print a default config for a subcommand.
    ExampleConfig {
        /// One of simulate, estimate, adapt, conjecture, bounds-check, experiment.
        subcommand: String,
    },
}

fn with_run<T: serde::de::DeserializeOwned>(
    io: &Io,
    name: &str,
    body: impl FnOnce(&T, Option<&Path>, &mut RunDir) -> Result<String>,
) -> Result<String> {
    let (cfg, text) = load_config::<T>(&io.config)?;
    let mut run = RunDir::create(&io.out, name, &text)?;
    let base = io.config.parent();
    let msg = body(&cfg, base, &mut run)?;
    run.finish()?;
    Ok(msg)
}

fn dispatch(command: &Command) -> Result<String> {
    match command {
        Command::Simulate(io) => with_run(io, "simulate", |c, _, r| simulate(c, r)),
        Command::Estimate(io) => with_run(io, "estimate", estimate_cmd),
        Command::Adapt(io) => with_run(io, "adapt", adapt_cmd),
        Command::Conjecture(io) => with_run(io, "conjecture", |c, _, r| conjecture_cmd(c, r)),
        Command::BoundsCheck(io) => with_run(io, "bounds-check", |c, _, r| bounds_cmd(c, r)),
        Command::Experiment(io) => with_run(io, "experiment", |c, _, r| experiment_cmd(c, r)),
        Command::ExampleConfig { subcommand } => example_config(subcommand),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| dispatch(&cli.command));
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
