//! Adam with decoupled weight decay, operating on the named parameter
//! tensors in registry order.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelParams;

/// Optimizer hyper-parameters. Betas and epsilon are the common defaults;
/// the decay is decoupled (applied to the parameter directly, not folded
/// into the gradient).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamHyper {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor, plus the
/// shared step counter driving bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    slots: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    /// Zero state shaped after the model's parameters.
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            slots: params
                .tensors
                .iter()
                .map(|t| (vec![0.0; t.numel()], vec![0.0; t.numel()]))
                .collect(),
        }
    }
}

/// One optimizer step over every parameter. `grads` must align with the
/// parameter tensors (registry order), as produced by walking the bound
/// leaves after backward.
///
/// Per scalar: first the decoupled decay `p -= lr * wd * p`, then the
/// bias-corrected moment update `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<(), TrainError> {
    if grads.len() != params.tensors.len() || state.slots.len() != params.tensors.len() {
        return Err(TrainError::Optimizer(format!(
            "{} gradient tensors and {} state slots for {} parameters",
            grads.len(),
            state.slots.len(),
            params.tensors.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);

    for ((tensor, grad), (m, v)) in params
        .tensors
        .iter_mut()
        .zip(grads)
        .zip(&mut state.slots)
    {
        if grad.len() != tensor.values.len() {
            return Err(TrainError::Optimizer(format!(
                "gradient for {:?} has {} entries, parameter has {}",
                tensor.name,
                grad.len(),
                tensor.values.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Optimizer(format!(
                "non-finite gradient in {:?}",
                tensor.name
            )));
        }
        for i in 0..grad.len() {
            let p = &mut tensor.values[i];
            let g = grad[i];
            *p -= hyper.learning_rate * hyper.weight_decay * *p;
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            *p -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_params() -> ModelParams {
        ModelParams::init(&ModelConfig {
            image_size: 8,
            patch_size: 4,
            channels: 2,
            heads: 1,
            depth: 1,
            categories: 2,
            latent_dim: 2,
            cvae_hidden: [3, 3],
            use_tokens: true,
            use_latent: false,
            init_seed: 5,
        })
        .unwrap()
    }

    fn zero_grads(params: &ModelParams) -> Vec<Vec<f64>> {
        params.tensors.iter().map(|t| vec![0.0; t.numel()]).collect()
    }

    #[test]
    fn three_step_trace_matches_hand_rolled_oracle() {
        let mut params = tiny_params();
        params.tensors[0].values[0] = 0.5;
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::new(0.01, 0.004);
        let grad_trace = [0.3, -0.2, 0.05];

        // Hand-rolled scalar Adam, same definition, independent arithmetic.
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut p, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for (step, &g) in grad_trace.iter().enumerate() {
            let t = (step + 1) as i32;
            p -= 0.01 * 0.004 * p;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            p -= 0.01 * m_hat / (v_hat.sqrt() + eps);
        }

        for &g in &grad_trace {
            let mut grads = zero_grads(&params);
            grads[0][0] = g;
            adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
        }
        let got = params.tensors[0].values[0];
        assert!((got - p).abs() < 1e-12, "{got} vs oracle {p}");
    }

    #[test]
    fn zero_gradient_zero_state_only_decays() {
        let mut params = tiny_params();
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::new(0.1, 0.02);
        let grads = zero_grads(&params);
        adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
        for (a, b) in params.tensors.iter().zip(&before.tensors) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(*x, y - 0.1 * 0.02 * y, "{}", a.name);
            }
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut params = tiny_params();
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::new(0.0, 0.5);
        let mut grads = zero_grads(&params);
        for g in &mut grads {
            g.fill(1.0);
        }
        adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
        assert_eq!(params, before, "lr 0 freezes parameters, decay included");
    }

    #[test]
    fn constant_gradient_step_magnitude_approaches_learning_rate() {
        let mut params = tiny_params();
        params.tensors[0].values[0] = 0.0;
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::new(0.003, 0.0);
        let mut grads = zero_grads(&params);
        grads[0][0] = 1.0;
        let mut previous = 0.0;
        let mut last_step = 0.0;
        for _ in 0..200 {
            adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
            last_step = (params.tensors[0].values[0] - previous).abs();
            previous = params.tensors[0].values[0];
        }
        assert!(
            (last_step - hyper.learning_rate).abs() < 0.01 * hyper.learning_rate,
            "step {last_step} should settle near lr {}",
            hyper.learning_rate
        );
    }

    #[test]
    fn bad_gradients_name_the_parameter() {
        let mut params = tiny_params();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::new(0.01, 0.0);
        let mut grads = zero_grads(&params);
        grads[1][0] = f64::NAN;
        let err = adam_step(&mut params, &grads, &mut state, &hyper).unwrap_err();
        assert!(err.to_string().contains("embed.b"), "{err}");

        let short = vec![vec![0.0]];
        assert!(adam_step(&mut params, &short, &mut state, &hyper).is_err());
    }
}
