//! `rtvae`: train and evaluate robust tabular VAE anomaly detectors.
//!
//! Exit codes: 0 success, 1 data/config error, 2 usage error.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use commands::{CliError, CommonArgs};

#[derive(Parser)]
#[command(
    name = "rtvae",
    version,
    about = "Robust tabular VAE anomaly detection"
)]
struct Cli {
    /// Experiment config file (train, gridsearch, experiment)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's out_dir)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed override (also settable via RTVAE_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and grid search
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a CSV into a binary dataset cache
    Ingest {
        /// Input CSV
        #[arg(long)]
        csv: PathBuf,
        /// Schema document (TOML)
        #[arg(long)]
        schema: PathBuf,
        /// Output cache path
        #[arg(long)]
        out: PathBuf,
        /// The CSV has a header row
        #[arg(long)]
        header: bool,
        /// Reuse the encoder state of an existing model instead of fitting
        #[arg(long)]
        encoder_from: Option<PathBuf>,
    },
    /// Train one model per the config (beta = "grid" runs a grid search)
    Train,
    /// Score a dataset cache with a trained model
    Score {
        /// Model JSON
        #[arg(long)]
        model: PathBuf,
        /// Dataset cache
        #[arg(long)]
        data: PathBuf,
        /// Output score CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search over the beta grid, keeping the best model
    Gridsearch,
    /// Contamination sweep comparing the vanilla and robust variants
    Experiment,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let common = CommonArgs {
        config: cli.config,
        out_dir: cli.out_dir,
        seed: cli.seed,
    };

    let result = match &cli.command {
        Command::Ingest {
            csv,
            schema,
            out,
            header,
            encoder_from,
        } => commands::cmd_ingest(csv, schema, out, *header, encoder_from.as_deref()),
        Command::Train => commands::cmd_train(&common, false),
        Command::Gridsearch => commands::cmd_train(&common, true),
        Command::Score { model, data, out } => commands::cmd_score(model, data, out),
        Command::Experiment => commands::cmd_experiment(&common),
    };

    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
