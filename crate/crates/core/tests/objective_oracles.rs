//! Loss and metric verification against independent plain-number oracles:
//! hand-computed fixtures, compensated-summation reimplementations, a Monte
//! Carlo estimate for the closed-form Gaussian divergence, and finite
//! differences through the composite objective.

use copresence_core::model::GaussianPair;
use copresence_core::objectives::{
    bce_multilabel, classification_metrics, estimation_metrics, kl_gaussians, kl_gaussians_plain,
    l1_loss, mse_loss, smooth_l1_loss, summarize_estimation, total_loss, RegressionKind,
    METRIC_PROB_FLOOR,
};
use copresence_core::tensor::grad_check;
use copresence_core::{Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn leaf(tape: &Tape, values: &[f64]) -> Tensor {
    tape.leaf(&[values.len(), 1], values.to_vec()).unwrap()
}

fn pair(tape: &Tape, mu: &[f64], sigma: &[f64]) -> GaussianPair {
    GaussianPair {
        mu: leaf(tape, mu),
        sigma: leaf(tape, sigma),
    }
}

/// Kahan-compensated sum, so the oracle's rounding error is not the
/// same as the implementation's.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

// ── fixtures ──

#[test]
fn hedged_prediction_fixture() {
    // Ground truth pure rain, prediction split evenly over two categories:
    // every loss has a closed-form value.
    let tape = Tape::new();
    let pred = leaf(&tape, &[0.5, 0.5]);
    let target = leaf(&tape, &[1.0, 0.0]);
    assert_eq!(mse_loss(&pred, &target).unwrap().item().unwrap(), 0.25);
    let tape = Tape::new();
    let pred = leaf(&tape, &[0.5, 0.5]);
    let target = leaf(&tape, &[1.0, 0.0]);
    assert_eq!(l1_loss(&pred, &target).unwrap().item().unwrap(), 0.5);
    let tape = Tape::new();
    let pred = leaf(&tape, &[0.5, 0.5]);
    let target = leaf(&tape, &[1.0, 0.0]);
    assert_eq!(
        smooth_l1_loss(&pred, &target).unwrap().item().unwrap(),
        0.125
    );
    let tape = Tape::new();
    let pred = leaf(&tape, &[0.5, 0.5]);
    let target = leaf(&tape, &[1.0, 0.0]);
    let bce = bce_multilabel(&pred, &target).unwrap().item().unwrap();
    assert!((bce - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn bce_survives_hard_zero_and_one() {
    // Saturated predictions on the wrong side: both log terms hit the clip,
    // the loss is -ln(clip) and every gradient stays finite.
    let tape = Tape::new();
    let pred = leaf(&tape, &[0.0, 1.0]);
    let target = leaf(&tape, &[1.0, 0.0]);
    let loss = bce_multilabel(&pred, &target).unwrap();
    let expected = -(1e-7f64.ln());
    assert!((loss.item().unwrap() - expected).abs() < 1e-9);
    loss.backward().unwrap();
    let grads = pred.grad().unwrap();
    assert!(grads.iter().all(|g| g.is_finite()), "grads {grads:?}");
}

// ── plain-number oracles over random inputs ──

#[test]
fn tape_losses_match_compensated_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.gen_range(1..12);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..0.999)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();

        let tape = Tape::new();
        let pred = leaf(&tape, &p);
        let target = leaf(&tape, &t);

        let mse = mse_loss(&pred, &target).unwrap().item().unwrap();
        let want = kahan_sum(p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b))) / n as f64;
        assert!((mse - want).abs() < 1e-14, "mse {mse} vs {want}");

        let l1 = l1_loss(&pred, &target).unwrap().item().unwrap();
        let want = kahan_sum(p.iter().zip(&t).map(|(a, b)| (a - b).abs())) / n as f64;
        assert!((l1 - want).abs() < 1e-14);

        let sl1 = smooth_l1_loss(&pred, &target).unwrap().item().unwrap();
        let want = kahan_sum(p.iter().zip(&t).map(|(a, b)| {
            let d = (a - b).abs();
            if d < 1.0 {
                0.5 * d * d
            } else {
                d - 0.5
            }
        })) / n as f64;
        assert!((sl1 - want).abs() < 1e-14);

        let bce = bce_multilabel(&pred, &target).unwrap().item().unwrap();
        let want = -kahan_sum(p.iter().zip(&t).map(|(a, b)| {
            let a = a.clamp(1e-7, 1.0 - 1e-7);
            b * a.ln() + (1.0 - b) * (1.0 - a).ln()
        })) / n as f64;
        assert!((bce - want).abs() < 1e-12);
    }
}

#[test]
fn estimation_metrics_match_compensated_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.gen_range(2..10);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = estimation_metrics(&p, &t).unwrap();

        let ssd = kahan_sum(p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)));
        assert!((m.ssd - ssd).abs() < 1e-14);
        assert_eq!(m.mse, m.ssd / n as f64, "mse is ssd over n, same sum");

        let mae = kahan_sum(p.iter().zip(&t).map(|(a, b)| (a - b).abs())) / n as f64;
        assert!((m.mae - mae).abs() < 1e-14);

        let kl = kahan_sum(t.iter().zip(&p).filter(|(t, _)| **t > 0.0).map(|(t, p)| {
            t * (t / p.clamp(METRIC_PROB_FLOOR, 1.0)).ln()
        }));
        assert!((m.kl - kl).abs() < 1e-12);

        let ce = -kahan_sum(
            t.iter()
                .zip(&p)
                .filter(|(t, _)| **t > 0.0)
                .map(|(t, p)| t * p.clamp(METRIC_PROB_FLOOR, 1.0).ln()),
        );
        assert!((m.ce - ce).abs() < 1e-12);

        let mean_t = kahan_sum(t.iter().copied()) / n as f64;
        let ss_tot = kahan_sum(t.iter().map(|x| (x - mean_t) * (x - mean_t)));
        let r2 = 1.0 - ssd / ss_tot;
        assert!((m.r2.unwrap() - r2).abs() < 1e-10);
    }
}

#[test]
fn summary_averages_each_field() {
    let a = estimation_metrics(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
    let b = estimation_metrics(&[0.9, 0.1], &[1.0, 0.0]).unwrap();
    let s = summarize_estimation(&[a, b]).unwrap();
    assert_eq!(s.count, 2);
    assert_eq!(s.mean_ssd, (a.ssd + b.ssd) / 2.0);
    assert_eq!(s.mean_kl, (a.kl + b.kl) / 2.0);
    assert_eq!(s.mean_r2, Some((a.r2.unwrap() + b.r2.unwrap()) / 2.0));
    assert_eq!(s.r2_excluded, 0);
    assert!(summarize_estimation(&[]).is_err());
}

#[test]
fn classification_report_matches_independent_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let samples = 60;
    let categories = 6;
    let pred: Vec<Vec<u8>> = (0..samples)
        .map(|_| (0..categories).map(|_| rng.gen_range(0..=1u8)).collect())
        .collect();
    let target: Vec<Vec<u8>> = (0..samples)
        .map(|_| (0..categories).map(|_| rng.gen_range(0..=1u8)).collect())
        .collect();
    let report = classification_metrics(&pred, &target).unwrap();

    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    for c in 0..categories {
        let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0, 0, 0);
        for s in 0..samples {
            match (pred[s][c] == 1, target[s][c] == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let score = report.per_category[c];
        assert_eq!((score.tp, score.fp, score.fn_, score.tn), (tp, fp, fn_, tn));
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        // Dense random labels: every denominator is populated here.
        assert_eq!(score.precision, Some(precision));
        assert_eq!(score.recall, Some(recall));
        let f1 = 2.0 * precision * recall / (precision + recall);
        assert!((score.f1.unwrap() - f1).abs() < 1e-15);
        assert_eq!(score.accuracy, (tp + tn) as f64 / samples as f64);
    }
    let op = tp_all as f64 / (tp_all + fp_all) as f64;
    let or = tp_all as f64 / (tp_all + fn_all) as f64;
    assert_eq!(report.micro_precision, Some(op));
    assert_eq!(report.micro_recall, Some(or));
    assert!((report.micro_f1.unwrap() - 2.0 * op * or / (op + or)).abs() < 1e-15);
}

// ── gaussian divergence ──

#[test]
fn divergence_tensor_and_plain_twins_agree_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let n = rng.gen_range(1..8);
        let mu_q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu_p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sigma_q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..3.0)).collect();
        let sigma_p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..3.0)).collect();

        let tape = Tape::new();
        let q = pair(&tape, &mu_q, &sigma_q);
        let p = pair(&tape, &mu_p, &sigma_p);
        let taped = kl_gaussians(&q, &p).unwrap().item().unwrap();
        let plain = kl_gaussians_plain(&mu_q, &sigma_q, &mu_p, &sigma_p).unwrap();
        // Same term layout, same summation order: identical to the bit.
        assert_eq!(taped, plain);
    }
}

#[test]
fn divergence_is_exactly_zero_between_equal_gaussians() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let n = rng.gen_range(1..10);
        let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let sigma: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..10.0)).collect();
        assert_eq!(kl_gaussians_plain(&mu, &sigma, &mu, &sigma).unwrap(), 0.0);

        let tape = Tape::new();
        let q = pair(&tape, &mu, &sigma);
        let p = pair(&tape, &mu, &sigma);
        assert_eq!(kl_gaussians(&q, &p).unwrap().item().unwrap(), 0.0);
    }
}

#[test]
fn divergence_matches_monte_carlo_estimate() {
    // Sanity-scale check; the heavyweight version lives in the acceptance
    // suite. Estimate E_q[ln q(x) - ln p(x)] by sampling from q.
    let cases: [(&[f64], &[f64], &[f64], &[f64]); 3] = [
        (&[0.0], &[1.0], &[1.0], &[2.0]),
        (&[0.5, -0.3], &[0.7, 1.2], &[0.0, 0.0], &[1.0, 1.0]),
        (&[2.0], &[0.3], &[-1.0], &[0.5]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for (mu_q, sigma_q, mu_p, sigma_p) in cases {
        let closed = kl_gaussians_plain(mu_q, sigma_q, mu_p, sigma_p).unwrap();
        let draws = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let mut ratio = 0.0;
            for i in 0..mu_q.len() {
                let eps: f64 = rng.sample(StandardNormal);
                let x = mu_q[i] + sigma_q[i] * eps;
                let zq = (x - mu_q[i]) / sigma_q[i];
                let zp = (x - mu_p[i]) / sigma_p[i];
                ratio += (sigma_p[i] / sigma_q[i]).ln() + 0.5 * (zp * zp - zq * zq);
            }
            sum += ratio;
            sum_sq += ratio * ratio;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - closed).abs() <= 4.0 * se + 1e-9,
            "closed {closed} vs mc {mean} (se {se})"
        );
    }
}

proptest! {
    #[test]
    fn divergence_is_nonnegative(
        mu_q in proptest::collection::vec(-5.0f64..5.0, 1..6),
        mu_p_raw in proptest::collection::vec(-5.0f64..5.0, 6),
        sigma_q_raw in proptest::collection::vec(0.01f64..4.0, 6),
        sigma_p_raw in proptest::collection::vec(0.01f64..4.0, 6),
    ) {
        let n = mu_q.len();
        let kl = kl_gaussians_plain(
            &mu_q,
            &sigma_q_raw[..n],
            &mu_p_raw[..n],
            &sigma_p_raw[..n],
        ).unwrap();
        prop_assert!(kl >= -1e-12, "kl {kl}");
    }
}

// ── composite objective ──

#[test]
fn total_loss_composes_its_terms_exactly() {
    let tape = Tape::new();
    let probs = leaf(&tape, &[0.2, 0.7, 0.4]);
    let target = leaf(&tape, &[0.0, 1.0, 0.5]);
    let q = pair(&tape, &[0.3, -0.1], &[0.9, 1.1]);
    let p = pair(&tape, &[0.0, 0.0], &[1.0, 1.0]);
    let lambda = 0.004;
    let terms = total_loss(&probs, &target, Some((&q, &p)), lambda, RegressionKind::L2).unwrap();
    let total = terms.total.item().unwrap();
    assert_eq!(total, terms.regression + terms.divergence * lambda);
    assert!(terms.divergence > 0.0);

    // Without the latent branch the total is the regression term verbatim.
    let tape = Tape::new();
    let probs = leaf(&tape, &[0.2, 0.7, 0.4]);
    let target = leaf(&tape, &[0.0, 1.0, 0.5]);
    let terms = total_loss(&probs, &target, None, lambda, RegressionKind::L1).unwrap();
    assert_eq!(terms.total.item().unwrap(), terms.regression);
    assert_eq!(terms.divergence, 0.0);

    // Weight zero keeps the divergence reported but out of the objective.
    let tape = Tape::new();
    let probs = leaf(&tape, &[0.2, 0.7, 0.4]);
    let target = leaf(&tape, &[0.0, 1.0, 0.5]);
    let q = pair(&tape, &[0.3, -0.1], &[0.9, 1.1]);
    let p = pair(&tape, &[0.0, 0.0], &[1.0, 1.0]);
    let terms = total_loss(&probs, &target, Some((&q, &p)), 0.0, RegressionKind::L2).unwrap();
    assert_eq!(terms.total.item().unwrap(), terms.regression);
    assert!(terms.divergence > 0.0);
}

#[test]
fn composite_gradients_match_finite_differences() {
    // One leaf carries raw probabilities plus both Gaussians, so the check
    // covers the gradient paths through q and through p alike.
    let x0 = [0.3, -0.6, 0.8, 0.25, -0.4, -0.1, 0.2, 0.35, -0.15, 0.05, -0.3];
    for kind in RegressionKind::ALL {
        let worst = grad_check(
            |tape, x| {
                let probs = x.slice_rows(0, 3)?.sigmoid()?;
                let target = tape.leaf(&[3, 1], vec![0.9, 0.05, 0.62])?;
                let q = GaussianPair {
                    mu: x.slice_rows(3, 2)?,
                    sigma: x.slice_rows(5, 2)?.exp()?,
                };
                let p = GaussianPair {
                    mu: x.slice_rows(7, 2)?,
                    sigma: x.slice_rows(9, 2)?.exp()?,
                };
                let terms = total_loss(&probs, &target, Some((&q, &p)), 0.01, kind).map_err(
                    |e| copresence_core::tensor::TensorError::Invalid {
                        op: "total_loss",
                        detail: e.to_string(),
                    },
                )?;
                Ok(terms.total)
            },
            &x0,
            &[11, 1],
            1e-5,
        )
        .unwrap();
        assert!(worst < 1e-6, "{kind}: worst relative error {worst}");
    }
}

#[test]
fn invalid_objective_inputs_are_rejected() {
    let tape = Tape::new();
    let a = leaf(&tape, &[0.5, 0.5]);
    let b = leaf(&tape, &[1.0]);
    assert!(mse_loss(&a, &b).is_err());
    assert!(l1_loss(&a, &b).is_err());
    assert!(bce_multilabel(&a, &b).is_err());

    let q = pair(&tape, &[0.0], &[1.0]);
    let p = pair(&tape, &[0.0, 0.0], &[1.0, 1.0]);
    assert!(kl_gaussians(&q, &p).is_err());
    assert!(kl_gaussians_plain(&[0.0], &[1.0], &[0.0], &[-1.0]).is_err());
    assert!(kl_gaussians_plain(&[0.0], &[0.0], &[0.0], &[1.0]).is_err());

    let target = leaf(&tape, &[0.5, 0.5]);
    for bad in [f64::NAN, f64::INFINITY, -0.5] {
        assert!(total_loss(&a, &target, None, bad, RegressionKind::L2).is_err());
    }
}

#[test]
fn regression_kind_names_round_trip() {
    for kind in RegressionKind::ALL {
        assert_eq!(RegressionKind::parse(kind.name()), Some(kind));
        assert_eq!(kind.to_string(), kind.name());
    }
    assert_eq!(RegressionKind::parse("mse"), Some(RegressionKind::L2));
    assert_eq!(RegressionKind::parse("huber"), Some(RegressionKind::SmoothL1));
    assert_eq!(RegressionKind::parse("???"), None);
}
