//! Plain-number evaluation metrics for the probability track (estimation)
//! and the thresholded track (classification).
//!
//! Undefined values are never papered over: a ratio with a zero denominator
//! comes back as `None` and the aggregate reports how many entries were
//! skipped, so a suspicious macro average can be traced to its cause.

use serde::{Deserialize, Serialize};

use super::ObjectiveError;

/// Predictions are clamped to [1e-7, 1] before any log: only log(p)
/// appears in metrics, so a perfect 1.0 must survive the clip.
pub const METRIC_PROB_FLOOR: f64 = 1e-7;

/// Per-sample estimation metrics over one probability vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationMetrics {
    /// Sum of squared differences.
    pub ssd: f64,
    /// ssd divided by the category count — the same sum, so `mse * n`
    /// and `ssd` never disagree.
    pub mse: f64,
    pub mae: f64,
    /// sum_i t_i ln(t_i / clamp(p_i)), with the 0 ln 0 convention: a zero
    /// target contributes nothing regardless of the prediction.
    pub kl: f64,
    /// -sum_i t_i ln(clamp(p_i)).
    pub ce: f64,
    /// 1 - ssd / sum((t - mean(t))^2); undefined for constant targets.
    pub r2: Option<f64>,
    pub constant_target: bool,
}

pub fn estimation_metrics(
    pred: &[f64],
    target: &[f64],
) -> Result<EstimationMetrics, ObjectiveError> {
    if pred.len() != target.len() {
        return Err(ObjectiveError::LengthMismatch {
            op: "estimation_metrics",
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(ObjectiveError::Empty {
            op: "estimation_metrics",
        });
    }
    for (&p, &t) in pred.iter().zip(target) {
        if !p.is_finite() || !t.is_finite() {
            return Err(ObjectiveError::InvalidInput {
                op: "estimation_metrics",
                detail: "non-finite entry".into(),
            });
        }
        if t < 0.0 {
            return Err(ObjectiveError::InvalidInput {
                op: "estimation_metrics",
                detail: format!("negative target {t}"),
            });
        }
    }

    let n = pred.len() as f64;
    let mut ssd = 0.0;
    let mut abs_sum = 0.0;
    let mut kl = 0.0;
    let mut ce = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        ssd += d * d;
        abs_sum += d.abs();
        let p_clamped = p.clamp(METRIC_PROB_FLOOR, 1.0);
        if t > 0.0 {
            kl += t * (t / p_clamped).ln();
            ce -= t * p_clamped.ln();
        }
    }

    let mean_t = target.iter().sum::<f64>() / n;
    let ss_tot: f64 = target.iter().map(|&t| (t - mean_t) * (t - mean_t)).sum();
    let constant_target = ss_tot == 0.0;
    let r2 = if constant_target {
        None
    } else {
        Some(1.0 - ssd / ss_tot)
    };

    Ok(EstimationMetrics {
        ssd,
        mse: ssd / n,
        mae: abs_sum / n,
        kl,
        ce,
        r2,
        constant_target,
    })
}

/// Estimation metrics averaged over samples. R-squared averages only the
/// samples where it was defined; `r2_excluded` says how many were not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    pub count: usize,
    pub mean_ssd: f64,
    pub mean_mse: f64,
    pub mean_mae: f64,
    pub mean_kl: f64,
    pub mean_ce: f64,
    pub mean_r2: Option<f64>,
    pub r2_excluded: usize,
}

pub fn summarize_estimation(
    items: &[EstimationMetrics],
) -> Result<EstimationSummary, ObjectiveError> {
    if items.is_empty() {
        return Err(ObjectiveError::Empty {
            op: "summarize_estimation",
        });
    }
    let n = items.len() as f64;
    let mut r2_sum = 0.0;
    let mut r2_count = 0usize;
    for m in items {
        if let Some(r2) = m.r2 {
            r2_sum += r2;
            r2_count += 1;
        }
    }
    Ok(EstimationSummary {
        count: items.len(),
        mean_ssd: items.iter().map(|m| m.ssd).sum::<f64>() / n,
        mean_mse: items.iter().map(|m| m.mse).sum::<f64>() / n,
        mean_mae: items.iter().map(|m| m.mae).sum::<f64>() / n,
        mean_kl: items.iter().map(|m| m.kl).sum::<f64>() / n,
        mean_ce: items.iter().map(|m| m.ce).sum::<f64>() / n,
        mean_r2: (r2_count > 0).then(|| r2_sum / r2_count as f64),
        r2_excluded: items.len() - r2_count,
    })
}

/// Confusion counts and derived scores for one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// tp / (tp + fp); None when the category was never predicted.
    pub precision: Option<f64>,
    /// tp / (tp + fn); None when the category never occurs.
    pub recall: Option<f64>,
    /// Harmonic mean; None when either side is undefined, zero when both
    /// are defined but the category was never hit.
    pub f1: Option<f64>,
    pub accuracy: f64,
}

/// Multi-label classification report: per-category scores, their macro
/// averages (AP / AR / AF1) over the categories where they are defined,
/// and micro averages (OP / OR / OF1) over pooled counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_category: Vec<CategoryScore>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
    pub micro_precision: Option<f64>,
    pub micro_recall: Option<f64>,
    pub micro_f1: Option<f64>,
    pub mean_accuracy: f64,
    pub skipped_precision: usize,
    pub skipped_recall: usize,
    pub skipped_f1: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn f1_of(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut defined = 0usize;
    let mut skipped = 0usize;
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                defined += 1;
            }
            None => skipped += 1,
        }
    }
    ((defined > 0).then(|| sum / defined as f64), skipped)
}

pub fn classification_metrics(
    pred: &[Vec<u8>],
    target: &[Vec<u8>],
) -> Result<ClassificationReport, ObjectiveError> {
    if pred.len() != target.len() {
        return Err(ObjectiveError::LengthMismatch {
            op: "classification_metrics",
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(ObjectiveError::Empty {
            op: "classification_metrics",
        });
    }
    let categories = target[0].len();
    if categories == 0 {
        return Err(ObjectiveError::Empty {
            op: "classification_metrics",
        });
    }
    for (p, t) in pred.iter().zip(target) {
        if p.len() != categories || t.len() != categories {
            return Err(ObjectiveError::LengthMismatch {
                op: "classification_metrics",
                expected: categories,
                got: p.len().min(t.len()),
            });
        }
        if p.iter().chain(t).any(|&v| v > 1) {
            return Err(ObjectiveError::InvalidInput {
                op: "classification_metrics",
                detail: "labels must be 0 or 1".into(),
            });
        }
    }

    let n = pred.len();
    let mut counts = vec![[0usize; 4]; categories]; // tp fp fn tn
    for (p, t) in pred.iter().zip(target) {
        for c in 0..categories {
            match (p[c], t[c]) {
                (1, 1) => counts[c][0] += 1,
                (1, 0) => counts[c][1] += 1,
                (0, 1) => counts[c][2] += 1,
                _ => counts[c][3] += 1,
            }
        }
    }

    let per_category: Vec<CategoryScore> = counts
        .iter()
        .map(|&[tp, fp, fn_, tn]| {
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            CategoryScore {
                tp,
                fp,
                fn_,
                tn,
                precision,
                recall,
                f1: f1_of(precision, recall),
                accuracy: (tp + tn) as f64 / n as f64,
            }
        })
        .collect();

    let (macro_precision, skipped_precision) =
        mean_defined(per_category.iter().map(|c| c.precision));
    let (macro_recall, skipped_recall) = mean_defined(per_category.iter().map(|c| c.recall));
    let (macro_f1, skipped_f1) = mean_defined(per_category.iter().map(|c| c.f1));

    let pool = counts.iter().fold([0usize; 4], |mut acc, c| {
        for i in 0..4 {
            acc[i] += c[i];
        }
        acc
    });
    let micro_precision = ratio(pool[0], pool[0] + pool[1]);
    let micro_recall = ratio(pool[0], pool[0] + pool[2]);
    let micro_f1 = f1_of(micro_precision, micro_recall);
    let mean_accuracy =
        per_category.iter().map(|c| c.accuracy).sum::<f64>() / categories as f64;

    Ok(ClassificationReport {
        per_category,
        macro_precision,
        macro_recall,
        macro_f1,
        micro_precision,
        micro_recall,
        micro_f1,
        mean_accuracy,
        skipped_precision,
        skipped_recall,
        skipped_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_miss_fixture() {
        // Target says all rain, prediction hedges 50/50 over two categories.
        let m = estimation_metrics(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_eq!(m.ssd, 0.5);
        assert_eq!(m.mse, 0.25);
        assert_eq!(m.mae, 0.5);
        assert!((m.kl - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((m.ce - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(m.r2, Some(0.0));
    }

    #[test]
    fn perfect_prediction_scores_zero_loss_like_metrics() {
        let t = [0.7, 0.3, 0.0];
        let m = estimation_metrics(&t, &t).unwrap();
        assert_eq!(m.ssd, 0.0);
        assert_eq!(m.kl, 0.0);
        assert_eq!(m.r2, Some(1.0));
        // A hard 1.0 prediction must survive the clip: no phantom entropy.
        let m = estimation_metrics(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(m.ce, 0.0);
        assert_eq!(m.kl, 0.0);
    }

    #[test]
    fn constant_target_disables_r2() {
        let m = estimation_metrics(&[0.4, 0.6], &[0.5, 0.5]).unwrap();
        assert!(m.constant_target);
        assert_eq!(m.r2, None);
        let s = summarize_estimation(&[
            m,
            estimation_metrics(&[0.5, 0.5], &[1.0, 0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(s.r2_excluded, 1);
        assert_eq!(s.mean_r2, Some(0.0));
        assert_eq!(s.count, 2);
    }

    #[test]
    fn zero_target_contributes_nothing_to_divergence() {
        // Even a hard-zero prediction on a zero target is free.
        let m = estimation_metrics(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(m.kl, 0.0);
        // But a zero prediction on a positive target pays the clip price.
        let m = estimation_metrics(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((m.kl - (1.0f64 / METRIC_PROB_FLOOR).ln()).abs() < 1e-12);
    }

    #[test]
    fn classification_hand_fixture() {
        // Category 0: 2 tp, 1 fp, 1 fn; category 1: never true, never
        // predicted; category 2: always true, never predicted.
        let pred = vec![
            vec![1u8, 0, 0],
            vec![1, 0, 0],
            vec![1, 0, 0],
            vec![0, 0, 0],
        ];
        let target = vec![
            vec![1u8, 0, 1],
            vec![1, 0, 1],
            vec![0, 0, 1],
            vec![1, 0, 1],
        ];
        let r = classification_metrics(&pred, &target).unwrap();
        let c0 = r.per_category[0];
        assert_eq!((c0.tp, c0.fp, c0.fn_, c0.tn), (2, 1, 1, 0));
        assert_eq!(c0.precision, Some(2.0 / 3.0));
        assert_eq!(c0.recall, Some(2.0 / 3.0));
        assert!((c0.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c0.accuracy, 0.5);

        let c1 = r.per_category[1];
        assert_eq!(c1.precision, None, "never predicted");
        assert_eq!(c1.recall, None, "never true");
        assert_eq!(c1.f1, None);
        assert_eq!(c1.accuracy, 1.0);

        let c2 = r.per_category[2];
        assert_eq!(c2.precision, None);
        assert_eq!(c2.recall, Some(0.0));
        assert_eq!(c2.f1, None);

        assert_eq!(r.skipped_precision, 2);
        assert_eq!(r.skipped_recall, 1);
        assert_eq!(r.skipped_f1, 2);
        assert_eq!(r.macro_precision, Some(2.0 / 3.0));
        assert_eq!(r.macro_recall, Some(1.0 / 3.0));

        // Micro pools: tp=2, fp=1, fn=5.
        assert_eq!(r.micro_precision, Some(2.0 / 3.0));
        assert_eq!(r.micro_recall, Some(2.0 / 7.0));
    }

    #[test]
    fn degenerate_all_negative_report() {
        let pred = vec![vec![0u8, 0]];
        let target = vec![vec![0u8, 0]];
        let r = classification_metrics(&pred, &target).unwrap();
        assert_eq!(r.macro_precision, None);
        assert_eq!(r.micro_precision, None);
        assert_eq!(r.micro_f1, None);
        assert_eq!(r.mean_accuracy, 1.0);
        assert_eq!(r.skipped_precision, 2);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(estimation_metrics(&[0.5], &[0.5, 0.5]).is_err());
        assert!(estimation_metrics(&[], &[]).is_err());
        assert!(estimation_metrics(&[f64::NAN], &[0.5]).is_err());
        assert!(estimation_metrics(&[0.5], &[-0.1]).is_err());
        assert!(classification_metrics(&[vec![2u8]], &[vec![1u8]]).is_err());
        assert!(classification_metrics(&[vec![1u8, 0]], &[vec![1u8]]).is_err());
    }
}
