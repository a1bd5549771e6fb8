//! Training losses (on the tape) and evaluation metrics (plain numbers).
//!
//! The split is deliberate: losses must be differentiable and live in
//! [`losses`]; metrics are read-only diagnostics and live in [`metrics`].
//! The two use different probability clips — losses clamp predictions to
//! [1e-7, 1 - 1e-7] because log(1 - p) must stay finite, metrics clamp to
//! [1e-7, 1] because only log(p) appears there and a perfect 1.0 is a
//! legitimate value to score.

mod losses;
mod metrics;

pub use losses::{
    bce_multilabel, kl_gaussians, kl_gaussians_plain, l1_loss, mse_loss, smooth_l1_loss,
    total_loss, LossTerms, RegressionKind, LOSS_PROB_CLIP,
};
pub use metrics::{
    classification_metrics, estimation_metrics, summarize_estimation, CategoryScore,
    ClassificationReport, EstimationMetrics, EstimationSummary, METRIC_PROB_FLOOR,
};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{op}: expected length {expected}, got {got}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: {detail}")]
    InvalidInput { op: &'static str, detail: String },
    #[error("{op}: no data")]
    Empty { op: &'static str },
}
