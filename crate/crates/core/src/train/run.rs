//! The training loop and the evaluation tables.
//!
//! A run is: shuffle per epoch, one tape per mini-batch, mean per-sample
//! loss backward, Adam step, then a held-out SSD sweep; the parameters from
//! the best validation epoch are what the run returns. Evaluation produces
//! the full report — overall estimation summary, one row per category, one
//! row per co-presence stratum, and the thresholded classification scores.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{forward_infer, forward_train, ModelConfig, ModelParams, TrainOptions};
use crate::objectives::{
    classification_metrics, estimation_metrics, summarize_estimation, total_loss,
    ClassificationReport, EstimationMetrics, EstimationSummary,
};
use crate::sim::{Dataset, Image, ManifestRow, Split, Stratum};
use crate::Tape;

use super::{adam_step, stream_seed, AdamHyper, AdamState, TrainConfig, TrainError};

const STREAM_SHUFFLE: u64 = 1;
const STREAM_FORWARD: u64 = 2;

pub const RUN_FORMAT_VERSION: u32 = 1;

// ── run records ──────────────────────────────────────────────────────────

/// One point of the loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample training loss (regression + lambda * divergence).
    pub train_loss: f64,
    pub regression: f64,
    pub divergence: f64,
    /// Mean per-sample SSD on the held-out split.
    pub val_ssd: f64,
}

/// Everything a finished run wrote down. Apart from `wall_time_secs` this
/// is a deterministic function of (configs, dataset bytes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_ssd: f64,
    /// Held-out report for the retained (best-epoch) parameters.
    pub final_eval: EvalReport,
    pub wall_time_secs: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub record: RunRecord,
    /// Parameters from the best validation epoch, not the last one.
    pub params: ModelParams,
}

// ── evaluation report ────────────────────────────────────────────────────

/// Column-wise estimation scores for one weather category: the metric runs
/// over that category's (prediction, target) series across all samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub metrics: EstimationMetrics,
}

/// Per-sample estimation summary inside one co-presence stratum. Empty
/// strata keep their row (count 0, no summary) so the table shape is
/// stable across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: String,
    pub count: usize,
    pub summary: Option<EstimationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Which rows were scored: "train", "test" or "all".
    pub split: String,
    pub count: usize,
    /// Threshold used for the classification track.
    pub threshold: f64,
    pub categories: Vec<String>,
    /// Per-sample estimation metrics averaged over the whole selection.
    pub estimation: EstimationSummary,
    pub per_category: Vec<CategoryRow>,
    /// One row per stratum ("1".."4", ">4") plus a trailing "all" row.
    pub per_stratum: Vec<StratumRow>,
    pub classification: ClassificationReport,
}

fn split_name(split: Option<Split>) -> &'static str {
    match split {
        Some(Split::Train) => "train",
        Some(Split::Test) => "test",
        None => "all",
    }
}

/// Build the full report from already-computed probability vectors. Kept
/// separate from the model so the report math can be checked against
/// predictions of known quality (feeding the targets back in must score a
/// perfect table).
pub fn report_from_predictions(
    preds: &[Vec<f64>],
    rows: &[&ManifestRow],
    categories: &[String],
    threshold: f64,
    split: &str,
) -> Result<EvalReport, TrainError> {
    if preds.len() != rows.len() {
        return Err(TrainError::Mismatch(format!(
            "{} predictions for {} manifest rows",
            preds.len(),
            rows.len()
        )));
    }
    if rows.is_empty() {
        return Err(TrainError::EmptySplit(split.to_string()));
    }
    let m = categories.len();
    for (p, row) in preds.iter().zip(rows) {
        if p.len() != m || row.label_prob.len() != m {
            return Err(TrainError::Mismatch(format!(
                "sample {}: prediction width {} / label width {} for {m} categories",
                row.index,
                p.len(),
                row.label_prob.len()
            )));
        }
    }

    let per_sample: Vec<EstimationMetrics> = preds
        .iter()
        .zip(rows)
        .map(|(p, row)| estimation_metrics(p, &row.label_prob))
        .collect::<Result<_, _>>()?;
    let estimation = summarize_estimation(&per_sample)?;

    let per_category = (0..m)
        .map(|c| {
            let pred_col: Vec<f64> = preds.iter().map(|p| p[c]).collect();
            let target_col: Vec<f64> = rows.iter().map(|r| r.label_prob[c]).collect();
            Ok(CategoryRow {
                category: categories[c].clone(),
                metrics: estimation_metrics(&pred_col, &target_col)?,
            })
        })
        .collect::<Result<_, TrainError>>()?;

    let mut per_stratum = Vec::with_capacity(Stratum::ALL.len() + 1);
    for s in Stratum::ALL {
        let members: Vec<EstimationMetrics> = rows
            .iter()
            .zip(&per_sample)
            .filter(|(r, _)| r.stratum == s)
            .map(|(_, m)| *m)
            .collect();
        per_stratum.push(StratumRow {
            stratum: s.label().to_string(),
            count: members.len(),
            summary: if members.is_empty() {
                None
            } else {
                Some(summarize_estimation(&members)?)
            },
        });
    }
    per_stratum.push(StratumRow {
        stratum: "all".to_string(),
        count: rows.len(),
        summary: Some(estimation),
    });

    // Same inclusive boundary as the generator's label rule.
    let pred_bin: Vec<Vec<u8>> = preds
        .iter()
        .map(|p| p.iter().map(|&v| u8::from(v >= threshold)).collect())
        .collect();
    let target_bin: Vec<Vec<u8>> = rows.iter().map(|r| r.label_binary.clone()).collect();
    let classification = classification_metrics(&pred_bin, &target_bin)?;

    Ok(EvalReport {
        split: split.to_string(),
        count: rows.len(),
        threshold,
        categories: categories.to_vec(),
        estimation,
        per_category,
        per_stratum,
        classification,
    })
}

fn check_compatible(config: &ModelConfig, dataset: &Dataset) -> Result<(), TrainError> {
    if config.categories != dataset.categories.len() {
        return Err(TrainError::Mismatch(format!(
            "model has {} categories, dataset has {}",
            config.categories,
            dataset.categories.len()
        )));
    }
    if config.image_size != dataset.config.image_size {
        return Err(TrainError::Mismatch(format!(
            "model expects {}px images, dataset has {}px",
            config.image_size, dataset.config.image_size
        )));
    }
    Ok(())
}

fn predict_rows(params: &ModelParams, dataset: &Dataset, rows: &[&ManifestRow]) -> Result<Vec<Vec<f64>>, TrainError> {
    rows.par_iter()
        .map(|row| {
            let image = dataset.load_image(row)?;
            Ok(forward_infer(params, &image)?.probs)
        })
        .collect()
}

/// Score a trained model on one split (or the whole dataset).
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    split: Option<Split>,
) -> Result<EvalReport, TrainError> {
    check_compatible(&params.config, dataset)?;
    let rows = dataset.select(split, None);
    if rows.is_empty() {
        return Err(TrainError::EmptySplit(split_name(split).to_string()));
    }
    let preds = predict_rows(params, dataset, &rows)?;
    report_from_predictions(
        &preds,
        &rows,
        &dataset.categories,
        dataset.config.binarize_threshold,
        split_name(split),
    )
}

// ── training loop ────────────────────────────────────────────────────────

struct LoadedSample {
    image: Image,
    label: Vec<f64>,
}

fn load_split(dataset: &Dataset, split: Split) -> Result<Vec<LoadedSample>, TrainError> {
    dataset
        .select(Some(split), None)
        .into_iter()
        .map(|row| {
            Ok(LoadedSample {
                image: dataset.load_image(row)?,
                label: row.label_prob.clone(),
            })
        })
        .collect()
}

/// Train from scratch on the train split, validating against the test
/// split after every epoch and keeping the parameters with the lowest
/// validation SSD.
pub fn train(
    dataset: &Dataset,
    base_model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let model_cfg = cfg.resolve_model(base_model);
    check_compatible(&model_cfg, dataset)?;

    let train_set = load_split(dataset, Split::Train)?;
    let val_set = load_split(dataset, Split::Test)?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train".to_string()));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("test".to_string()));
    }

    let started = Instant::now();
    let mut params = ModelParams::init(&model_cfg)?;
    let mut state = AdamState::new(&params);
    let hyper = AdamHyper::new(cfg.learning_rate, cfg.weight_decay);
    let opts = TrainOptions {
        stochastic_latent: true,
        dropout: cfg.dropout,
    };

    let mut epochs: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_SHUFFLE, epoch as u64));
        order.shuffle(&mut shuffle_rng);
        let mut forward_rng =
            ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_FORWARD, epoch as u64));

        let mut loss_sum = 0.0;
        let mut reg_sum = 0.0;
        let mut div_sum = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let bound = params.bind(&tape)?;
            let mut batch_total: Option<crate::Tensor> = None;
            for &i in batch {
                let sample = &train_set[i];
                let out = forward_train(&bound, &sample.image, &sample.label, &opts, &mut forward_rng)?;
                let target = tape.vector(&sample.label);
                let gaussians = match (&out.posterior, &out.prior) {
                    (Some(q), Some(p)) => Some((q, p)),
                    _ => None,
                };
                let terms = total_loss(&out.probs, &target, gaussians, cfg.lambda, cfg.loss)?;
                loss_sum += terms.regression + cfg.lambda * terms.divergence;
                reg_sum += terms.regression;
                div_sum += terms.divergence;
                batch_total = Some(match batch_total {
                    Some(acc) => acc.add(&terms.total)?,
                    None => terms.total,
                });
            }
            let batch_loss = batch_total
                .expect("chunks() never yields an empty batch")
                .scale(1.0 / batch.len() as f64)?;
            batch_loss.backward()?;

            let grads: Vec<Vec<f64>> = bound
                .iter()
                .map(|(name, leaf)| {
                    leaf.grad()
                        .ok_or_else(|| TrainError::Optimizer(format!("no gradient for {name}")))
                })
                .collect::<Result<_, _>>()?;
            adam_step(&mut params, &grads, &mut state, &hyper)?;
        }

        let n_train = train_set.len() as f64;
        let val_ssd = validation_ssd(&params, &val_set)?;
        if best.as_ref().map_or(true, |(_, s, _)| val_ssd < *s) {
            best = Some((epoch, val_ssd, params.clone()));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n_train,
            regression: reg_sum / n_train,
            divergence: div_sum / n_train,
            val_ssd,
        });
    }

    let (best_epoch, best_val_ssd, best_params) =
        best.expect("epochs >= 1 was validated, so one epoch always ran");
    let final_eval = evaluate(&best_params, dataset, Some(Split::Test))?;
    let record = RunRecord {
        format_version: RUN_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_hash: cfg.config_hash(base_model),
        train: cfg.clone(),
        model: model_cfg,
        epochs,
        best_epoch,
        best_val_ssd,
        final_eval,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        record,
        params: best_params,
    })
}

fn validation_ssd(params: &ModelParams, val_set: &[LoadedSample]) -> Result<f64, TrainError> {
    let ssds: Vec<f64> = val_set
        .par_iter()
        .map(|sample| {
            let out = forward_infer(params, &sample.image)?;
            Ok::<f64, TrainError>(estimation_metrics(&out.probs, &sample.label)?.ssd)
        })
        .collect::<Result<_, _>>()?;
    Ok(ssds.iter().sum::<f64>() / ssds.len() as f64)
}
