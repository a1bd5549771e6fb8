//! Forward passes: patch embedding, the attention encoder, the latent
//! Gaussian heads, and the two entry points (training and inference).
//!
//! Randomness discipline: `forward_train` consumes its RNG in a fixed
//! order — per-layer dropout masks first (only when dropout is on), then
//! the latent draw (only when stochastic) — so a seeded caller gets
//! bit-reproducible runs regardless of which options are enabled.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BoundParams, ModelError, ModelParams};
use crate::sim::Image;
use crate::{Tape, Tensor};

/// Minimum latent spread; keeps divergence terms away from log(0).
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Fixed sinusoidal position code, row-major (positions x dims): even dims
/// carry sin, odd dims carry cos, wavelengths geometric in 10^4.
pub fn positional_encoding(positions: usize, dims: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(positions * dims);
    for pos in 0..positions {
        for i in 0..dims {
            let pair = (i / 2) as f64;
            let rate = 10_000f64.powf(2.0 * pair / dims as f64);
            let angle = pos as f64 / rate;
            out.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    out
}

/// Flatten an image into patch rows: one row per grid cell (row-major),
/// each row the patch pixels in (y, x, rgb) order. Returns (patch count,
/// row length, data).
pub fn patch_tokens(image: &Image, patch: usize) -> Result<(usize, usize, Vec<f64>), ModelError> {
    if image.width != image.height || image.width % patch != 0 || patch == 0 {
        return Err(ModelError::Config(format!(
            "cannot cut a {}x{} image into {patch}px patches",
            image.width, image.height
        )));
    }
    let grid = image.width / patch;
    let row_len = 3 * patch * patch;
    let mut out = Vec::with_capacity(grid * grid * row_len);
    for gy in 0..grid {
        for gx in 0..grid {
            for py in 0..patch {
                for px in 0..patch {
                    let rgb = image.pixel(gx * patch + px, gy * patch + py);
                    out.extend_from_slice(&rgb);
                }
            }
        }
    }
    Ok((grid * grid, row_len, out))
}

/// One encoder layer: multi-head self-attention over the token rows
/// followed by a per-token two-layer feed-forward. No residuals, no
/// normalization — the stack is shallow enough to train bare, and keeping
/// it bare keeps the oracle implementations honest.
///
/// The attention scale is 1/sqrt(channels) — the feature-channel count,
/// not the per-head width.
pub fn encoder_layer(
    bound: &BoundParams,
    h: &Tensor,
    layer: usize,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor, ModelError> {
    let config = bound.config();
    let d = config.spatial();
    let dh = d / config.heads;
    let scale = 1.0 / (config.channels as f64).sqrt();

    let q = h.matmul(bound.get(&format!("enc{layer}.w_q"))?)?;
    let k = h.matmul(bound.get(&format!("enc{layer}.w_k"))?)?;
    let v = h.matmul(bound.get(&format!("enc{layer}.w_v"))?)?;

    let mut attended: Option<Tensor> = None;
    for head in 0..config.heads {
        let qh = q.slice_cols(head * dh, dh)?;
        let kh = k.slice_cols(head * dh, dh)?;
        let vh = v.slice_cols(head * dh, dh)?;
        let scores = qh.matmul(&kh.transpose()?)?.scale(scale)?;
        let oh = scores.softmax(1)?.matmul(&vh)?;
        attended = Some(match attended {
            None => oh,
            Some(acc) => acc.concat_cols(&oh)?,
        });
    }
    let attended = attended.expect("heads >= 1 by config validation");

    let mut hidden = attended
        .matmul(bound.get(&format!("enc{layer}.ffn.w1"))?)?
        .add_row_vec(bound.get(&format!("enc{layer}.ffn.b1"))?)?
        .relu()?;
    if dropout > 0.0 {
        let rng = rng.ok_or_else(|| {
            ModelError::Config("dropout requires a random stream".into())
        })?;
        let keep = 1.0 - dropout;
        let rows = config.stack_rows();
        let mask: Vec<f64> = (0..rows * d)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = bound.tape().leaf(&[rows, d], mask)?;
        hidden = hidden.mul(&mask)?;
    }
    Ok(hidden
        .matmul(bound.get(&format!("enc{layer}.ffn.w2"))?)?
        .add_row_vec(bound.get(&format!("enc{layer}.ffn.b2"))?)?)
}

/// Embed the image and run the encoder stack; returns the final
/// (channels + categories) x spatial stack — or just the channel rows when
/// tokens are disabled (no attention runs in that variant).
fn encode(
    bound: &BoundParams,
    image: &Image,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor, ModelError> {
    let config = bound.config();
    if image.width != config.image_size || image.height != config.image_size {
        return Err(ModelError::ImageSize {
            expected: config.image_size,
            got: image.width,
        });
    }
    let tape = bound.tape();
    let (d, row_len, patch_data) = patch_tokens(image, config.patch_size)?;
    let patches = tape.leaf(&[d, row_len], patch_data)?;
    let pe = tape.leaf(
        &[d, config.channels],
        positional_encoding(d, config.channels),
    )?;
    let embedded = patches
        .matmul(bound.get("embed.w")?)?
        .add_row_vec(bound.get("embed.b")?)?
        .add(&pe)?;
    // Channels become rows over the spatial axis; weather tokens stack
    // underneath so attention can route evidence between the two.
    let mut h = embedded.transpose()?;
    if config.use_tokens {
        h = h.concat_rows(bound.get("tokens")?)?;
        for layer in 0..config.depth {
            h = encoder_layer(bound, &h, layer, dropout, rng.as_deref_mut())?;
        }
    }
    Ok(h)
}

/// The per-category weather representation: the refined token rows, or the
/// whole (channel-row) stack in the tokenless variant.
fn weather_block(bound: &BoundParams, h: &Tensor) -> Result<Tensor, ModelError> {
    let config = bound.config();
    if config.use_tokens {
        Ok(h.slice_rows(config.channels, config.categories)?)
    } else {
        Ok(h.clone())
    }
}

/// Input vector for a Gaussian net. With tokens, the label (when given) is
/// broadcast onto the token rows — every spatial entry of row `i` shifts by
/// `label[i]` — before pooling. Without tokens, the pooled channel rows get
/// a category-sized label slot appended (zeros for the prior).
fn gaussian_input(
    bound: &BoundParams,
    x: &Tensor,
    label: Option<&Tensor>,
) -> Result<Tensor, ModelError> {
    let config = bound.config();
    if config.use_tokens {
        match label {
            Some(gt) => Ok(x.add_col_vec(gt)?.gap()?),
            None => Ok(x.gap()?),
        }
    } else {
        let tape = bound.tape();
        let pooled = x.gap()?.reshape(&[config.channels, 1])?;
        let slot = match label {
            Some(gt) => gt.reshape(&[config.categories, 1])?,
            None => tape.leaf(&[config.categories, 1], vec![0.0; config.categories])?,
        };
        Ok(pooled
            .concat_rows(&slot)?
            .reshape(&[config.channels + config.categories])?)
    }
}

/// A diagonal Gaussian on the tape.
#[derive(Debug, Clone)]
pub struct GaussianPair {
    pub mu: Tensor,
    pub sigma: Tensor,
}

/// Two-hidden-layer net from a pooled representation vector to a diagonal
/// Gaussian. The prior and posterior differ only in their weights and in
/// what [`gaussian_input`] fed them.
pub fn gaussian_head(
    bound: &BoundParams,
    prefix: &str,
    pooled: &Tensor,
) -> Result<GaussianPair, ModelError> {
    let a1 = bound
        .get(&format!("{prefix}.l1.w"))?
        .matvec(pooled)?
        .add(bound.get(&format!("{prefix}.l1.b"))?)?
        .relu()?;
    let a2 = bound
        .get(&format!("{prefix}.l2.w"))?
        .matvec(&a1)?
        .add(bound.get(&format!("{prefix}.l2.b"))?)?
        .relu()?;
    let mu = bound
        .get(&format!("{prefix}.mu.w"))?
        .matvec(&a2)?
        .add(bound.get(&format!("{prefix}.mu.b"))?)?;
    let sigma = bound
        .get(&format!("{prefix}.sigma.w"))?
        .matvec(&a2)?
        .add(bound.get(&format!("{prefix}.sigma.b"))?)?
        .softplus()?
        .add_scalar(SIGMA_FLOOR)?;
    Ok(GaussianPair { mu, sigma })
}

/// Per-category response maps from the weather representation, plus the
/// broadcast latent response, pooled and squashed into one probability per
/// category.
pub fn category_head(
    bound: &BoundParams,
    x: &Tensor,
    z: Option<&Tensor>,
) -> Result<Tensor, ModelError> {
    let config = bound.config();
    let mut logits_map = bound
        .get("head.w3")?
        .matmul(x)?
        .add_col_vec(bound.get("head.b3")?)?;
    if let Some(z) = z {
        let latent_response = bound
            .get("head.w4")?
            .matvec(z)?
            .add(bound.get("head.b4")?)?
            .broadcast_cols(config.spatial())?;
        logits_map = logits_map.add(&latent_response)?;
    }
    Ok(logits_map.gap()?.sigmoid()?)
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Sample the latent via mu + sigma * eps instead of using the mean.
    pub stochastic_latent: bool,
    /// Dropout probability on the feed-forward hidden activations.
    pub dropout: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            stochastic_latent: true,
            dropout: 0.0,
        }
    }
}

/// Training-time outputs, all still on the tape so losses can backprop.
pub struct TrainForward {
    /// Per-category probabilities, rank-1.
    pub probs: Tensor,
    pub prior: Option<GaussianPair>,
    pub posterior: Option<GaussianPair>,
    /// Mean prior spread, read off the tape as a plain number.
    pub uncertainty: Option<f64>,
}

pub fn forward_train(
    bound: &BoundParams,
    image: &Image,
    label: &[f64],
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
) -> Result<TrainForward, ModelError> {
    let config = bound.config().clone();
    if label.len() != config.categories {
        return Err(ModelError::LabelSize {
            expected: config.categories,
            got: label.len(),
        });
    }
    let h = encode(bound, image, opts.dropout, Some(rng))?;
    let x = weather_block(bound, &h)?;

    if !config.use_latent {
        return Ok(TrainForward {
            probs: category_head(bound, &x, None)?,
            prior: None,
            posterior: None,
            uncertainty: None,
        });
    }

    let tape: &Tape = bound.tape();
    let prior = gaussian_head(bound, "prior", &gaussian_input(bound, &x, None)?)?;
    let gt = tape.vector(label);
    let posterior = gaussian_head(bound, "posterior", &gaussian_input(bound, &x, Some(&gt))?)?;

    // The response head always draws from the prior; the posterior only
    // shapes training through the divergence penalty.
    let z = if opts.stochastic_latent {
        let eps: Vec<f64> = (0..config.latent_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        prior.mu.add(&prior.sigma.mul(&tape.vector(&eps))?)?
    } else {
        prior.mu.clone()
    };
    let probs = category_head(bound, &x, Some(&z))?;

    let sigma_values = prior.sigma.values();
    let uncertainty = sigma_values.iter().sum::<f64>() / sigma_values.len() as f64;
    Ok(TrainForward {
        probs,
        prior: Some(prior),
        posterior: Some(posterior),
        uncertainty: Some(uncertainty),
    })
}

/// Inference outputs, detached from any tape.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InferOutput {
    pub probs: Vec<f64>,
    /// Mean prior spread; the model's overall "how sure am I" score.
    pub uncertainty: Option<f64>,
    /// Prior spread pushed through the latent response head: entry m is
    /// the std-dev of category m's latent logit contribution,
    /// sqrt(sum_l w4[m][l]^2 sigma[l]^2).
    pub per_category_sigma: Option<Vec<f64>>,
}

pub fn forward_infer(params: &ModelParams, image: &Image) -> Result<InferOutput, ModelError> {
    let config = &params.config;
    let tape = Tape::new();
    let bound = params.bind(&tape)?;
    let h = encode(&bound, image, 0.0, None)?;
    let x = weather_block(&bound, &h)?;

    if !config.use_latent {
        let probs = category_head(&bound, &x, None)?.values();
        return Ok(InferOutput {
            probs,
            uncertainty: None,
            per_category_sigma: None,
        });
    }

    let prior = gaussian_head(&bound, "prior", &gaussian_input(&bound, &x, None)?)?;
    let probs = category_head(&bound, &x, Some(&prior.mu))?.values();

    let sigma = prior.sigma.values();
    let uncertainty = sigma.iter().sum::<f64>() / sigma.len() as f64;
    let w4 = params.get("head.w4")?;
    let per_category_sigma = (0..config.categories)
        .map(|m| {
            let row = &w4.values[m * config.latent_dim..(m + 1) * config.latent_dim];
            row.iter()
                .zip(&sigma)
                .map(|(w, s)| w * w * s * s)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(InferOutput {
        probs,
        uncertainty: Some(uncertainty),
        per_category_sigma: Some(per_category_sigma),
    })
}
