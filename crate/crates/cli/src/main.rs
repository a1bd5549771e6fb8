//! `copresence`: generate synthetic multi-weather datasets, train the
//! co-presence estimator, evaluate checkpoints, predict on single images,
//! and merge runs into comparison reports.
//!
//! Exit codes: 0 success, 2 config/usage, 3 I/O, 4 training, 5
//! checkpoint/dataset incompatibility.

mod commands;
mod config;
mod error;
mod figures;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::ablate::AxisArg;
use commands::eval::{SplitArg, Track};
use commands::train::AblationMode;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "copresence",
    version,
    about = "Uncertainty-aware multi-weather co-presence estimation at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the config's [dataset] section.
    Generate {
        /// TOML config document.
        #[arg(long)]
        config: PathBuf,
        /// Dataset output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write checkpoint, run record and loss curves.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory produced by `generate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Run output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured epoch count (smoke runs).
        #[arg(long)]
        epochs: Option<usize>,
        /// Cap each split at N samples (smoke runs).
        #[arg(long)]
        samples: Option<usize>,
        /// Train a structural ablation instead of the full model.
        #[arg(long, value_enum)]
        ablation: Option<AblationMode>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Which metric track to report.
        #[arg(long, value_enum, default_value = "all")]
        track: Track,
        /// Which rows to score.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also write eval.json, CSV tables and figures here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one image through a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// PNG or JPEG image; resized to the model input if needed.
        #[arg(long)]
        image: PathBuf,
        /// Write the prediction as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write a probability bar chart here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Merge run directories into comparison tables and figures.
    Report {
        /// Output directory for tables and figures.
        #[arg(long)]
        out: PathBuf,
        /// Run directories (first one is the baseline).
        #[arg(required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
    },
    /// Sweep latent size, loss kind and divergence weight.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Which axis to sweep.
        #[arg(long, value_enum, default_value = "all")]
        axis: AxisArg,
        /// Override the configured epoch count (smoke runs).
        #[arg(long)]
        epochs: Option<usize>,
        /// Cap each split at N samples (smoke runs).
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { config, out } => commands::generate::run(&config, &out),
        Command::Train {
            config,
            dataset,
            out,
            epochs,
            samples,
            ablation,
            seed,
        } => commands::train::run(&config, &dataset, &out, epochs, samples, ablation, seed),
        Command::Eval {
            checkpoint,
            dataset,
            track,
            split,
            out,
        } => commands::eval::run(&checkpoint, &dataset, track, split, out.as_deref()),
        Command::Predict {
            checkpoint,
            image,
            json,
            svg,
        } => commands::predict::run(&checkpoint, &image, json.as_deref(), svg.as_deref()),
        Command::Report { out, runs } => commands::report::run(&runs, &out),
        Command::Ablate {
            config,
            dataset,
            out,
            axis,
            epochs,
            samples,
        } => commands::ablate::run(&config, &dataset, &out, axis, epochs, samples),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
