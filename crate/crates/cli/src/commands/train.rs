//! `train`: run the training loop and write the run directory —
//! checkpoint, run record, loss-curve CSV and SVG.

use std::path::Path;

use copresence_core::sim::Dataset;
use copresence_core::train::{train, TrainOutcome};

use crate::config::{load_config, resolve_model};
use crate::error::CliError;
use crate::figures::{self, fmt_num, LineSeries};

use super::{meta_comments, meta_desc, subsample, write_json};

/// Structural ablation presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationMode {
    /// Deterministic baseline: weather tokens, attention stack and latent
    /// branch all removed; regression loss only.
    NoUnc,
    /// Remove the weather-token attention stack only.
    NoMfe,
    /// Remove the prior/posterior latent branch only.
    NoPul,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    config_path: &Path,
    dataset_dir: &Path,
    out_dir: &Path,
    epochs: Option<usize>,
    samples: Option<usize>,
    ablation: Option<AblationMode>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let file = load_config(config_path)?;
    let mut dataset = Dataset::load(dataset_dir)?;
    if let Some(cap) = samples {
        subsample(&mut dataset, cap);
    }

    let mut train_cfg = file.train.clone();
    if let Some(e) = epochs {
        train_cfg.epochs = e;
    }
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    match ablation {
        Some(AblationMode::NoUnc) => {
            train_cfg.disable_mfe = true;
            train_cfg.disable_pul = true;
            train_cfg.lambda = 0.0;
        }
        Some(AblationMode::NoMfe) => train_cfg.disable_mfe = true,
        Some(AblationMode::NoPul) => {
            train_cfg.disable_pul = true;
            train_cfg.lambda = 0.0;
        }
        None => {}
    }

    let model_cfg = resolve_model(&file.model, &dataset);
    let summary = dataset.summary();
    println!(
        "training on {} ({} train / {} test samples, seed {})",
        dataset_dir.display(),
        summary.train,
        summary.test,
        train_cfg.seed
    );

    let outcome = train(&dataset, &model_cfg, &train_cfg)?;
    write_run_dir(out_dir, &outcome, &dataset)?;

    let rec = &outcome.record;
    println!(
        "best epoch {} of {} (val ssd {}); test ssd {}, r2 {}",
        rec.best_epoch,
        rec.epochs.len(),
        fmt_num(rec.best_val_ssd),
        fmt_num(rec.final_eval.estimation.mean_ssd),
        super::opt_num(rec.final_eval.estimation.mean_r2),
    );
    println!("wrote {}", out_dir.display());
    Ok(())
}

/// Write all artifacts of one run. Everything except the wall-time field
/// of `run.json` is byte-reproducible from the same inputs.
pub fn write_run_dir(
    out_dir: &Path,
    outcome: &TrainOutcome,
    dataset: &Dataset,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let rec = &outcome.record;

    outcome
        .params
        .save(&out_dir.join("checkpoint.json"), &dataset.categories)?;
    write_json(&out_dir.join("run.json"), rec)?;

    let comments = meta_comments(&rec.config_hash);
    let rows: Vec<Vec<String>> = rec
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.regression.to_string(),
                e.divergence.to_string(),
                e.val_ssd.to_string(),
            ]
        })
        .collect();
    figures::write_csv(
        &out_dir.join("loss_curve.csv"),
        &comments,
        &["epoch", "train_loss", "regression", "divergence", "val_ssd"],
        &rows,
    )?;

    let series = vec![
        LineSeries {
            name: "train loss".into(),
            points: rec
                .epochs
                .iter()
                .map(|e| (e.epoch as f64, e.train_loss))
                .collect(),
        },
        LineSeries {
            name: "val ssd".into(),
            points: rec
                .epochs
                .iter()
                .map(|e| (e.epoch as f64, e.val_ssd))
                .collect(),
        },
    ];
    figures::write_text(
        &out_dir.join("loss_curve.svg"),
        &figures::line_chart(
            "training curves",
            "epoch",
            "loss / ssd",
            &series,
            &meta_desc(&rec.config_hash),
        ),
    )?;
    Ok(())
}
