//! `pmc`: batch harness for generating benchmarks, training, reporting and
//! imputing a missing modality.
//!
//! Exit codes: 0 success, 2 config/spec/input error, 3 runtime failure.

mod config;
mod gen_data;
mod impute;
mod report;
mod summary;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pmc_core::PmcError;

use crate::config::ConfigError;

#[derive(Parser)]
#[command(name = "pmc", version, about = "Progressive modality cooperation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-modality dataset.
    GenData {
        /// Benchmark spec (TOML). Defaults to the blobs-mm2 preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Remove this modality from every target sample.
        #[arg(long)]
        drop: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment config over its seeds.
    Train {
        /// Experiment config (TOML).
        config: PathBuf,
    },
    /// Compare finished runs; the first run is the reference for deltas.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table as TSV at full precision.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill a missing target modality with a trained generator.
    Impute {
        /// Dataset with exactly one modality missing on the targets.
        #[arg(long)]
        dataset: PathBuf,
        /// Generator checkpoint (mmg.json from a pmc-pi run).
        #[arg(long)]
        generator: PathBuf,
        /// Ensemble checkpoint supplying the category vectors; uniform
        /// vectors are used without one.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<PmcError>() {
        Some(
            PmcError::Config { .. }
            | PmcError::Spec { .. }
            | PmcError::Parse { .. }
            | PmcError::Schema(_)
            | PmcError::Unsupported(_)
            | PmcError::Checkpoint(_),
        ) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { spec, seed, drop, out } => gen_data::run(spec.as_deref(), seed, drop.as_deref(), &out),
        Command::Train { config } => train::run(&config),
        Command::Report { runs, out } => report::run(&runs, out.as_deref()),
        Command::Impute {
            dataset,
            generator,
            ensemble,
            out,
        } => impute::run(&dataset, &generator, ensemble.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
