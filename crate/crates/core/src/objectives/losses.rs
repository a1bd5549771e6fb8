//! Differentiable training objectives.

use serde::{Deserialize, Serialize};

use super::ObjectiveError;
use crate::model::GaussianPair;
use crate::Tensor;

/// Probability clip for the binary cross-entropy loss; both logs must stay
/// finite, so the clip is symmetric.
pub const LOSS_PROB_CLIP: (f64, f64) = (1e-7, 1.0 - 1e-7);

/// Which regression loss drives the probability track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionKind {
    L2,
    L1,
    SmoothL1,
}

impl RegressionKind {
    pub const ALL: [RegressionKind; 3] = [
        RegressionKind::L2,
        RegressionKind::L1,
        RegressionKind::SmoothL1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegressionKind::L2 => "l2",
            RegressionKind::L1 => "l1",
            RegressionKind::SmoothL1 => "smooth-l1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "l2" | "mse" => RegressionKind::L2,
            "l1" | "mae" => RegressionKind::L1,
            "smooth-l1" | "smooth_l1" | "huber" => RegressionKind::SmoothL1,
            _ => return None,
        })
    }
}

impl std::fmt::Display for RegressionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_same_len(
    op: &'static str,
    pred: &Tensor,
    target: &Tensor,
) -> Result<(), ObjectiveError> {
    let (p, t) = (pred.values().len(), target.values().len());
    if p != t {
        return Err(ObjectiveError::LengthMismatch {
            op,
            expected: p,
            got: t,
        });
    }
    Ok(())
}

/// Mean squared error over all elements.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor, ObjectiveError> {
    check_same_len("mse_loss", pred, target)?;
    let diff = pred.sub(target)?;
    Ok(diff.mul(&diff)?.mean()?)
}

/// Mean absolute error over all elements.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor, ObjectiveError> {
    check_same_len("l1_loss", pred, target)?;
    Ok(pred.sub(target)?.abs()?.mean()?)
}

/// Mean smooth-l1 with knee 1: quadratic within one unit of error, linear
/// beyond it.
pub fn smooth_l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor, ObjectiveError> {
    check_same_len("smooth_l1_loss", pred, target)?;
    Ok(pred.sub(target)?.smooth_l1(1.0)?.mean()?)
}

/// Mean binary cross-entropy over independent per-category probabilities.
pub fn bce_multilabel(probs: &Tensor, target: &Tensor) -> Result<Tensor, ObjectiveError> {
    check_same_len("bce_multilabel", probs, target)?;
    let (lo, hi) = LOSS_PROB_CLIP;
    let p = probs.clamp(lo, hi)?;
    let log_p = p.ln()?;
    let log_not_p = p.neg()?.add_scalar(1.0)?.ln()?;
    let not_t = target.neg()?.add_scalar(1.0)?;
    let ll = target.mul(&log_p)?.add(&not_t.mul(&log_not_p)?)?;
    Ok(ll.mean()?.neg()?)
}

/// Closed-form divergence between diagonal Gaussians, KL(q || p), summed
/// over dimensions:
///
/// ```text
/// sum_i  ln(sigma_p/sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2
/// ```
///
/// The term layout makes KL(q || q) exactly zero in floating point:
/// ln(x/x) = ln(1) = 0 and x/(2x) = 1/2 are both exact, so equal inputs
/// cancel to 0.0 rather than to rounding noise.
pub fn kl_gaussians(q: &GaussianPair, p: &GaussianPair) -> Result<Tensor, ObjectiveError> {
    check_same_len("kl_gaussians", &q.mu, &p.mu)?;
    check_same_len("kl_gaussians", &q.sigma, &p.sigma)?;
    let log_ratio = p.sigma.div(&q.sigma)?.ln()?;
    let diff = q.mu.sub(&p.mu)?;
    let numer = q.sigma.mul(&q.sigma)?.add(&diff.mul(&diff)?)?;
    let denom = p.sigma.mul(&p.sigma)?.scale(2.0)?;
    let per_dim = log_ratio.add(&numer.div(&denom)?)?.add_scalar(-0.5)?;
    Ok(per_dim.sum()?)
}

/// Plain-number twin of [`kl_gaussians`], same term layout.
pub fn kl_gaussians_plain(
    mu_q: &[f64],
    sigma_q: &[f64],
    mu_p: &[f64],
    sigma_p: &[f64],
) -> Result<f64, ObjectiveError> {
    if mu_q.len() != mu_p.len() || sigma_q.len() != sigma_p.len() || mu_q.len() != sigma_q.len() {
        return Err(ObjectiveError::LengthMismatch {
            op: "kl_gaussians_plain",
            expected: mu_q.len(),
            got: mu_p.len().max(sigma_q.len()).max(sigma_p.len()),
        });
    }
    for &s in sigma_q.iter().chain(sigma_p) {
        if !(s > 0.0) || !s.is_finite() {
            return Err(ObjectiveError::InvalidInput {
                op: "kl_gaussians_plain",
                detail: format!("sigma must be positive and finite, got {s}"),
            });
        }
    }
    let mut total = 0.0;
    for i in 0..mu_q.len() {
        let log_ratio = (sigma_p[i] / sigma_q[i]).ln();
        let diff = mu_q[i] - mu_p[i];
        let numer = sigma_q[i] * sigma_q[i] + diff * diff;
        let denom = sigma_p[i] * sigma_p[i] * 2.0;
        total += log_ratio + numer / denom - 0.5;
    }
    Ok(total)
}

/// The combined objective and its pieces read back as plain numbers.
pub struct LossTerms {
    /// regression + lambda * divergence, still on the tape.
    pub total: Tensor,
    pub regression: f64,
    pub divergence: f64,
}

/// Build the training objective: the chosen regression loss on the
/// probability vector plus `lambda` times KL(posterior || prior). Models
/// running without the latent branch pass `gaussians: None` and train on
/// the regression term alone.
pub fn total_loss(
    probs: &Tensor,
    target: &Tensor,
    gaussians: Option<(&GaussianPair, &GaussianPair)>,
    lambda: f64,
    kind: RegressionKind,
) -> Result<LossTerms, ObjectiveError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ObjectiveError::InvalidInput {
            op: "total_loss",
            detail: format!("lambda {lambda} must be finite and non-negative"),
        });
    }
    let regression = match kind {
        RegressionKind::L2 => mse_loss(probs, target)?,
        RegressionKind::L1 => l1_loss(probs, target)?,
        RegressionKind::SmoothL1 => smooth_l1_loss(probs, target)?,
    };
    let reg_value = regression.item()?;
    match gaussians {
        Some((q, p)) => {
            let kl = kl_gaussians(q, p)?;
            let kl_value = kl.item()?;
            let total = regression.add(&kl.scale(lambda)?)?;
            Ok(LossTerms {
                total,
                regression: reg_value,
                divergence: kl_value,
            })
        }
        None => Ok(LossTerms {
            total: regression,
            regression: reg_value,
            divergence: 0.0,
        }),
    }
}
