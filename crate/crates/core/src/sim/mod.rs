//! Synthetic multi-weather scenario pipeline.
//!
//! A scenario is a small moisture/temperature system stepped with seeded
//! noise; its final state is mapped through configurable fuzzy memberships
//! to pick which weather categories co-occur and with what blend weights.
//! The scene is rendered as a convex combination of per-category procedural
//! effect layers over a shared base image, and the blend weights are the
//! ground-truth label, verbatim. That construction is the whole point: the
//! labels are exact by design, so estimator error is estimator error.

mod categories;
mod dataset;
mod effects;
mod membership;
mod render;
mod scenario;

pub use categories::{canonical_categories, CANONICAL_CATEGORY_COUNT};
pub use dataset::{
    generate_dataset, generate_sample, plan_samples, Dataset, DatasetSummary, GenerateConfig,
    ManifestRow, SamplePlan, Split, Stratum, STRATUM_LABELS,
};
pub use effects::{render_blend, EffectKind, WeatherEffect};
pub use membership::{memberships_raw, state_to_probabilities, Gate, GateVariable, MembershipConfig};
pub use render::{base_scene, Image, SceneParams};
pub use scenario::{
    fog_density, label_error_propagation, step_moisture, FluxDynamics, ScenarioState,
    MAGNUS_ALPHA, MAGNUS_BETA,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from scenario stepping, rendering and dataset generation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("{op}: {detail}")]
    InvalidInput { op: &'static str, detail: String },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("fog density: relative moisture {got} outside (0, 1]")]
    LogDomain { got: f64 },
    #[error("fog density: temperature {got} at or below the -{MAGNUS_BETA} singularity")]
    MagnusDomain { got: f64 },
    #[error("blend weights sum to {sum}, expected 1 within 1e-9")]
    WeightSum { sum: f64 },
    #[error("{op}: expected length {expected}, got {got}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

/// Probability vector over the weather categories: each entry in [0, 1].
///
/// Blend-derived vectors additionally sum to 1 within 1e-9 (checked by
/// [`ProbabilityVector::require_convex`]); raw membership vectors and model
/// predictions are bounded but need not sum to anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self, SimError> {
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidInput {
                    op: "probability_vector",
                    detail: format!("entry {i} = {v} outside [0, 1]"),
                });
            }
        }
        Ok(ProbabilityVector(p))
    }

    /// Check the convex-combination invariant of blend-derived vectors.
    pub fn require_convex(&self) -> Result<(), SimError> {
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SimError::WeightSum { sum });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ProbabilityVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One rendered sample with its exact labels.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub image: Image,
    pub label_prob: ProbabilityVector,
    pub label_binary: Vec<u8>,
    pub blend_weights: Vec<f64>,
    pub scenario_seed: u64,
}

/// The labels ARE the blend weights; this is the identity that makes the
/// synthetic ground truth exact.
pub fn ground_truth_from_weights(weights: &[f64]) -> Result<ProbabilityVector, SimError> {
    ProbabilityVector::new(weights.to_vec())
}

/// Threshold probabilities into the binary classification track's labels.
/// The boundary is inclusive: p = threshold counts as positive.
pub fn binarize(p: &ProbabilityVector, threshold: f64) -> Result<Vec<u8>, SimError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SimError::InvalidInput {
            op: "binarize",
            detail: format!("threshold {threshold} outside (0, 1)"),
        });
    }
    Ok(p.iter().map(|&v| u8::from(v >= threshold)).collect())
}
