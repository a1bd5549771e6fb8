//! Sweep one hyper-parameter axis, training a fresh model per value and
//! collecting the held-out estimation scores into a comparison table.

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::objectives::RegressionKind;
use crate::sim::Dataset;

use super::{train, TrainConfig, TrainError};

/// One sweepable axis with the values to try.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    LatentSize(Vec<usize>),
    LossKind(Vec<RegressionKind>),
    Lambda(Vec<f64>),
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            AblationAxis::LatentSize(_) => "latent-size",
            AblationAxis::LossKind(_) => "loss",
            AblationAxis::Lambda(_) => "lambda",
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            AblationAxis::LatentSize(v) => v.is_empty(),
            AblationAxis::LossKind(v) => v.is_empty(),
            AblationAxis::Lambda(v) => v.is_empty(),
        }
    }
}

/// The default sweeps: latent width, regression loss, divergence weight.
pub fn standard_axes() -> Vec<AblationAxis> {
    vec![
        AblationAxis::LatentSize(vec![4, 8, 16, 24, 32]),
        AblationAxis::LossKind(vec![
            RegressionKind::L1,
            RegressionKind::SmoothL1,
            RegressionKind::L2,
        ]),
        AblationAxis::Lambda(vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7]),
    ]
}

/// Held-out estimation scores for one swept value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: String,
    pub ssd: f64,
    pub kl: f64,
    pub r2: Option<f64>,
    pub ce: f64,
    pub best_epoch: usize,
    pub best_val_ssd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: String,
    pub rows: Vec<AblationRow>,
}

/// Train once per value on the axis, all other settings taken from `base`.
pub fn ablation_sweep(
    dataset: &Dataset,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    axis: &AblationAxis,
) -> Result<AblationTable, TrainError> {
    if axis.is_empty() {
        return Err(TrainError::Config(format!(
            "ablation axis {} has no values",
            axis.name()
        )));
    }
    let variants: Vec<(String, TrainConfig)> = match axis {
        AblationAxis::LatentSize(sizes) => sizes
            .iter()
            .map(|&latent_dim| {
                (
                    latent_dim.to_string(),
                    TrainConfig {
                        latent_dim,
                        ..base_train.clone()
                    },
                )
            })
            .collect(),
        AblationAxis::LossKind(kinds) => kinds
            .iter()
            .map(|&loss| {
                (
                    loss.name().to_string(),
                    TrainConfig {
                        loss,
                        ..base_train.clone()
                    },
                )
            })
            .collect(),
        AblationAxis::Lambda(lambdas) => lambdas
            .iter()
            .map(|&lambda| {
                (
                    format!("{lambda:e}"),
                    TrainConfig {
                        lambda,
                        ..base_train.clone()
                    },
                )
            })
            .collect(),
    };

    let mut rows = Vec::with_capacity(variants.len());
    for (value, cfg) in variants {
        let outcome = train(dataset, base_model, &cfg)?;
        let est = &outcome.record.final_eval.estimation;
        rows.push(AblationRow {
            value,
            ssd: est.mean_ssd,
            kl: est.mean_kl,
            r2: est.mean_r2,
            ce: est.mean_ce,
            best_epoch: outcome.record.best_epoch,
            best_val_ssd: outcome.record.best_val_ssd,
        });
    }
    Ok(AblationTable {
        axis: axis.name().to_string(),
        rows,
    })
}
