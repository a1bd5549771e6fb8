//! Estimation of co-present weather conditions in a single image, at desk
//! scale: synthetic scenario data with exact mixing labels, a token-attention
//! estimator that carries an explicit latent uncertainty distribution per
//! image, loss/metric suites, and a deterministic training harness.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: reverse-mode autodiff over dense row-major tensors,
//!   generic over the scalar type.
//! - [`sim`]: weather scenario simulation, fuzzy category memberships,
//!   procedural rendering and dataset generation.
//! - [`model`]: the estimator itself (patch embedding, weather-token
//!   attention encoder, prior/posterior latent Gaussians, prediction head).
//! - [`objectives`]: training losses and evaluation metric suites.
//! - [`train`]: Adam, the training loop, evaluation and ablation sweeps.
//!
//! Everything downstream of [`tensor`] works in f64 through the aliases
//! below; the autodiff layer itself also instantiates at f32.

pub mod model;
pub mod objectives;
pub mod sim;
pub mod tensor;
pub mod train;

/// 64-bit tensor used across the model and training stack.
pub type Tensor = tensor::DiffTensor<f64>;

/// 64-bit tape backing [`Tensor`].
pub type Tape = tensor::Tape<f64>;
