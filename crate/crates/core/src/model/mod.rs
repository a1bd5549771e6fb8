//! The co-presence estimator.
//!
//! Architecture, in one breath: the image is cut into patches, embedded and
//! position-coded, then transposed so each feature channel becomes a row
//! over the spatial axis; learned per-category weather tokens are stacked
//! underneath and the whole stack runs through a small attention encoder.
//! The refined token rows are the per-category weather representation: their
//! pooled summary feeds two Gaussian heads — a prior (image only) and a
//! posterior (image plus ground truth broadcast onto the token rows, used
//! only for the divergence term) — and a latent draw from the prior joins
//! the per-category response maps to produce one sigmoid score per category.
//! The prior's spread doubles as an explicit uncertainty estimate, so the
//! model can say "0.4 rain, and I'm not sure" rather than just "0.4 rain".
//!
//! Two structural switches carve out the ablation variants: `use_tokens`
//! removes the weather tokens and the attention stack (the head then reads
//! the raw channel rows), and `use_latent` removes the prior/posterior
//! branch. Both off is the deterministic baseline.

mod forward;

pub use forward::{
    category_head, encoder_layer, forward_infer, forward_train, gaussian_head, patch_tokens,
    positional_encoding, GaussianPair, InferOutput, TrainForward, TrainOptions, SIGMA_FLOOR,
};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;
use crate::{Tape, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("input image is {got}px square, model expects {expected}px")]
    ImageSize { expected: usize, got: usize },
    #[error("label vector has {got} entries, model has {expected} categories")]
    LabelSize { expected: usize, got: usize },
}

/// Shape of the estimator. `categories` fixes both the number of weather
/// tokens and the output width; the token/output binding is positional, so
/// the category order used at training time must be used at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    /// Per-patch embedding width; also the attention scale base.
    pub channels: usize,
    pub heads: usize,
    pub depth: usize,
    pub categories: usize,
    pub latent_dim: usize,
    /// Hidden widths of the prior/posterior nets.
    pub cvae_hidden: [usize; 2],
    /// When false the weather tokens and the whole attention stack are
    /// absent; the heads read the raw embedded channel rows instead. This
    /// is the feature-extractor half of the deterministic baseline.
    #[serde(default = "default_true")]
    pub use_tokens: bool,
    /// When false the latent branch (prior, posterior, latent head) is
    /// absent entirely: no parameters, no divergence term, no uncertainty.
    #[serde(default = "default_true")]
    pub use_latent: bool,
    pub init_seed: u64,
}

fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 64,
            patch_size: 8,
            channels: 16,
            heads: 1,
            depth: 2,
            categories: 14,
            latent_dim: 16,
            cvae_hidden: [64, 32],
            use_tokens: true,
            use_latent: true,
            init_seed: 42,
        }
    }
}

impl ModelConfig {
    /// Patch grid side length.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Spatial token width: number of patches, the row length of every
    /// token in the encoder stack.
    pub fn spatial(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Encoder stack height: feature-channel rows, plus the weather-token
    /// rows when tokens are enabled.
    pub fn stack_rows(&self) -> usize {
        self.channels + if self.use_tokens { self.categories } else { 0 }
    }

    /// Rows of the representation the prediction head reads: the refined
    /// token rows, or the raw channel rows in the tokenless variant.
    pub fn head_rows(&self) -> usize {
        if self.use_tokens {
            self.categories
        } else {
            self.channels
        }
    }

    /// Width of the prior/posterior input vector. With tokens it is the
    /// pooled token block; without, the pooled channel rows with a
    /// category-sized slot appended for the posterior's label (the prior
    /// sees zeros there).
    pub fn gaussian_input_dim(&self) -> usize {
        if self.use_tokens {
            self.categories
        } else {
            self.channels + self.categories
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.patch_size == 0 || self.image_size == 0 {
            return Err(ModelError::Config("image and patch size must be positive".into()));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(ModelError::Config(format!(
                "patch size {} does not divide image size {}",
                self.patch_size, self.image_size
            )));
        }
        if self.channels == 0 || self.categories == 0 {
            return Err(ModelError::Config(
                "channels and categories must be positive".into(),
            ));
        }
        if self.use_tokens && self.depth == 0 {
            return Err(ModelError::Config(
                "the attention stack needs at least one layer".into(),
            ));
        }
        if self.heads == 0 || self.spatial() % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "heads {} must divide the spatial width {}",
                self.heads,
                self.spatial()
            )));
        }
        if self.use_latent
            && (self.latent_dim == 0 || self.cvae_hidden.iter().any(|&h| h == 0))
        {
            return Err(ModelError::Config(
                "latent_dim and cvae_hidden must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Authoritative parameter list: names, shapes, and the order used for
    /// initialization, binding, checkpoints and optimizer state.
    pub fn registry(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.spatial();
        let m = self.categories;
        let patch_len = 3 * self.patch_size * self.patch_size;
        let mut reg: Vec<(String, Vec<usize>)> = vec![
            ("embed.w".into(), vec![patch_len, self.channels]),
            ("embed.b".into(), vec![self.channels]),
        ];
        if self.use_tokens {
            reg.push(("tokens".into(), vec![m, d]));
            for i in 0..self.depth {
                for name in ["w_q", "w_k", "w_v"] {
                    reg.push((format!("enc{i}.{name}"), vec![d, d]));
                }
                reg.push((format!("enc{i}.ffn.w1"), vec![d, d]));
                reg.push((format!("enc{i}.ffn.b1"), vec![d]));
                reg.push((format!("enc{i}.ffn.w2"), vec![d, d]));
                reg.push((format!("enc{i}.ffn.b2"), vec![d]));
            }
        }
        if self.use_latent {
            let [h1, h2] = self.cvae_hidden;
            let l = self.latent_dim;
            let g = self.gaussian_input_dim();
            for net in ["prior", "posterior"] {
                reg.push((format!("{net}.l1.w"), vec![h1, g]));
                reg.push((format!("{net}.l1.b"), vec![h1]));
                reg.push((format!("{net}.l2.w"), vec![h2, h1]));
                reg.push((format!("{net}.l2.b"), vec![h2]));
                reg.push((format!("{net}.mu.w"), vec![l, h2]));
                reg.push((format!("{net}.mu.b"), vec![l]));
                reg.push((format!("{net}.sigma.w"), vec![l, h2]));
                reg.push((format!("{net}.sigma.b"), vec![l]));
            }
        }
        reg.push(("head.w3".into(), vec![m, self.head_rows()]));
        reg.push(("head.b3".into(), vec![m]));
        if self.use_latent {
            reg.push(("head.w4".into(), vec![m, self.latent_dim]));
            reg.push(("head.b4".into(), vec![m]));
        }
        reg
    }
}

/// One named parameter tensor, stored off-tape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamTensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// All model parameters plus the config that shaped them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<ParamTensor>,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    categories: Vec<String>,
    #[serde(flatten)]
    params: ModelParams,
}

impl ModelParams {
    /// Deterministic initialization from `config.init_seed`: weight
    /// matrices are uniform with Glorot bounds, weather tokens are a
    /// narrow seeded normal (std 0.02), biases are zero.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let token_dist = Normal::new(0.0, 0.02).expect("fixed std is valid");
        let tensors = config
            .registry()
            .into_iter()
            .map(|(name, shape)| {
                let numel: usize = shape.iter().product();
                let values = if shape.len() == 1 {
                    vec![0.0; numel]
                } else if name == "tokens" {
                    (0..numel).map(|_| token_dist.sample(&mut rng)).collect()
                } else {
                    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    (0..numel).map(|_| rng.gen_range(-bound..bound)).collect()
                };
                ParamTensor { name, shape, values }
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor, ModelError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamTensor, ModelError> {
        self.tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(ParamTensor::numel).sum()
    }

    /// Check that names and shapes agree with the config's registry; used
    /// after loading a checkpoint.
    pub fn check_registry(&self) -> Result<(), ModelError> {
        let expected = self.config.registry();
        if expected.len() != self.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), tensor) in expected.iter().zip(&self.tensors) {
            if name != &tensor.name || shape != &tensor.shape {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {:?} with shape {:?}, expected {:?} with shape {:?}",
                    tensor.name, tensor.shape, name, shape
                )));
            }
            if tensor.values.len() != tensor.numel() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {:?} holds {} values for shape {:?}",
                    tensor.name,
                    tensor.values.len(),
                    tensor.shape
                )));
            }
            if tensor.values.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {:?} contains non-finite values",
                    tensor.name
                )));
            }
        }
        Ok(())
    }

    /// Put every parameter on `tape` as a leaf, in registry order.
    pub fn bind(&self, tape: &Tape) -> Result<BoundParams, ModelError> {
        let mut names = Vec::with_capacity(self.tensors.len());
        let mut leaves = Vec::with_capacity(self.tensors.len());
        for tensor in &self.tensors {
            names.push(tensor.name.clone());
            leaves.push(tape.leaf(&tensor.shape, tensor.values.clone())?);
        }
        Ok(BoundParams {
            tape: tape.clone(),
            config: self.config.clone(),
            names,
            leaves,
        })
    }

    /// Write a checkpoint. `categories` are the names bound to the output
    /// slots, in slot order; they travel with the weights because the
    /// binding is positional and silently re-ordering it is the one
    /// mistake a checkpoint must make detectable.
    pub fn save(&self, path: &Path, categories: &[String]) -> Result<(), ModelError> {
        self.check_registry()?;
        if categories.len() != self.config.categories {
            return Err(ModelError::Checkpoint(format!(
                "{} category names for {} output slots",
                categories.len(),
                self.config.categories
            )));
        }
        let checkpoint = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            categories: categories.to_vec(),
            params: self.clone(),
        };
        let mut body = serde_json::to_string(&checkpoint)?;
        body.push('\n');
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SavedModel, ModelError> {
        let checkpoint: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if checkpoint.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "format version {} not supported (expected {CHECKPOINT_VERSION})",
                checkpoint.format_version
            )));
        }
        if checkpoint.categories.len() != checkpoint.params.config.categories {
            return Err(ModelError::Checkpoint(format!(
                "{} category names for {} output slots",
                checkpoint.categories.len(),
                checkpoint.params.config.categories
            )));
        }
        checkpoint.params.config.validate()?;
        checkpoint.params.check_registry()?;
        Ok(SavedModel {
            params: checkpoint.params,
            categories: checkpoint.categories,
        })
    }
}

/// A checkpoint read back from disk: the parameters plus the category
/// names that were bound to the output slots at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub categories: Vec<String>,
}

/// Model parameters bound to a tape for one forward/backward round.
pub struct BoundParams {
    tape: Tape,
    config: ModelConfig,
    names: Vec<String>,
    leaves: Vec<Tensor>,
}

impl BoundParams {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ModelError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.leaves[i])
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    /// (name, leaf) pairs in registry order; the optimizer walks this to
    /// pull gradients after backward.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.leaves)
    }
}

/// Relabel the categories of a trained model: output slot `i` of the result
/// is output slot `perm[i]` of the original. Weather tokens, both response
/// heads, and every column block keyed by category move together, so the
/// returned model is the same function up to output order (and expects its
/// labels in the permuted order).
pub fn permute_categories(params: &ModelParams, perm: &[usize]) -> Result<ModelParams, ModelError> {
    let m = params.config.categories;
    {
        let mut seen = vec![false; m];
        if perm.len() != m {
            return Err(ModelError::Config(format!(
                "permutation has {} entries for {m} categories",
                perm.len()
            )));
        }
        for &p in perm {
            if p >= m || seen[p] {
                return Err(ModelError::Config(format!(
                    "invalid category permutation {perm:?}"
                )));
            }
            seen[p] = true;
        }
    }

    let mut out = params.clone();
    let row_permuted = ["tokens", "head.w3", "head.b3", "head.w4", "head.b4"];
    // Category-keyed column blocks. With tokens, the head and both Gaussian
    // nets consume the token rows directly; without, only the posterior's
    // trailing label slot (offset `channels`) is category-ordered.
    let col_permuted: Vec<(&str, usize)> = if params.config.use_tokens {
        vec![("head.w3", 0), ("prior.l1.w", 0), ("posterior.l1.w", 0)]
    } else {
        let c = params.config.channels;
        vec![("prior.l1.w", c), ("posterior.l1.w", c)]
    };

    for tensor in &mut out.tensors {
        let original = tensor.values.clone();
        let cols = *tensor.shape.last().unwrap_or(&1);
        if row_permuted.contains(&tensor.name.as_str()) {
            let row_len = if tensor.shape.len() == 1 { 1 } else { cols };
            for (i, &src) in perm.iter().enumerate() {
                tensor.values[i * row_len..(i + 1) * row_len]
                    .copy_from_slice(&original[src * row_len..(src + 1) * row_len]);
            }
        }
        if let Some(&(_, offset)) = col_permuted
            .iter()
            .find(|(name, _)| *name == tensor.name.as_str())
        {
            let rows = tensor.shape[0];
            let snapshot = tensor.values.clone();
            for r in 0..rows {
                for (i, &src) in perm.iter().enumerate() {
                    tensor.values[r * cols + offset + i] = snapshot[r * cols + offset + src];
                }
            }
        }
    }
    Ok(out)
}
