//! `rvseries`: check, theory, estimate and probe subcommands over a TOML
//! experiment config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, Run};

type Handler = fn(&Run) -> Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "rvseries",
    version,
    about = "Tail limits of randomly weighted heavy-tailed series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `estimation.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the moment conditions (exit 0 pass, 2 fail).
    Check(Common),
    /// Compute the limit constant of the tail set.
    Theory(Common),
    /// Estimate the tail ratio and compare with theory.
    Estimate(Common),
    /// Remainder-decay table and Hill estimate.
    Probe(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (common, command): (&Common, Handler) = match &cli.command {
        Command::Check(c) => (c, commands::check),
        Command::Theory(c) => (c, commands::theory),
        Command::Estimate(c) => (c, commands::estimate),
        Command::Probe(c) => (c, commands::probe),
    };
    if common.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(1);
    }
    let result = commands::load(&common.config).and_then(|config| {
        command(&Run::new(
            config,
            common.seed,
            common.workers,
            common.out.clone(),
        ))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
