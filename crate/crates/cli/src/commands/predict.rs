//! `predict`: run one image through a checkpoint and print per-category
//! probabilities with their uncertainty read-outs, most probable first.

use std::path::Path;

use serde::Serialize;

use copresence_core::model::{forward_infer, ModelConfig, ModelParams};
use copresence_core::sim::Image;

use crate::error::CliError;
use crate::figures::{self, fmt_num, BarSeries};

use super::{json_hash, meta_desc, tool_version, write_json};

#[derive(Debug, Clone, Serialize)]
struct PredictionRow {
    category: String,
    probability: f64,
    /// Std-dev of this category's latent logit contribution; absent for
    /// models trained without the latent branch.
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Serialize)]
struct PredictArtifact<'a> {
    tool_version: &'a str,
    config_hash: String,
    model: &'a ModelConfig,
    image: String,
    /// Mean prior sigma; the model's overall confidence read-out.
    #[serde(skip_serializing_if = "Option::is_none")]
    uncertainty: Option<f64>,
    rows: &'a [PredictionRow],
}

pub fn run(
    checkpoint: &Path,
    image_path: &Path,
    json_out: Option<&Path>,
    svg_out: Option<&Path>,
) -> Result<(), CliError> {
    let saved = ModelParams::load(checkpoint)?;
    let image = load_image_file(image_path, saved.params.config.image_size)?;
    let output = forward_infer(&saved.params, &image)?;

    let mut rows: Vec<PredictionRow> = saved
        .categories
        .iter()
        .enumerate()
        .map(|(i, name)| PredictionRow {
            category: name.clone(),
            probability: output.probs[i],
            sigma: output.per_category_sigma.as_ref().map(|s| s[i]),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.probability
            .partial_cmp(&a.probability)
            .expect("sigmoid outputs are finite")
            .then(a.category.cmp(&b.category))
    });

    println!("{:<12} {:>12} {:>12}", "category", "probability", "sigma");
    for row in &rows {
        println!(
            "{:<12} {:>12} {:>12}",
            row.category,
            fmt_num(row.probability),
            row.sigma.map_or_else(|| "-".to_string(), fmt_num),
        );
    }
    if let Some(u) = output.uncertainty {
        println!("uncertainty (mean prior sigma): {}", fmt_num(u));
    }

    let config_hash = json_hash(&saved.params.config);
    if let Some(path) = json_out {
        write_json(
            path,
            &PredictArtifact {
                tool_version: tool_version(),
                config_hash: config_hash.clone(),
                model: &saved.params.config,
                image: image_path.display().to_string(),
                uncertainty: output.uncertainty,
                rows: &rows,
            },
        )?;
    }
    if let Some(path) = svg_out {
        let groups: Vec<String> = rows.iter().map(|r| r.category.clone()).collect();
        let bars = BarSeries {
            name: "probability".into(),
            values: rows.iter().map(|r| r.probability).collect(),
        };
        figures::write_text(
            path,
            &figures::grouped_bar_chart(
                "per-category probability",
                "probability",
                &groups,
                &[bars],
                &meta_desc(&config_hash),
            ),
        )?;
    }
    Ok(())
}

/// Decode any supported raster format and box-resize it to the model's
/// square input; values land in [0, 1] exactly like dataset images.
fn load_image_file(path: &Path, size: usize) -> Result<Image, CliError> {
    let decoded =
        image::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let side = size as u32;
    let resized = if decoded.width() != side || decoded.height() != side {
        decoded.resize_exact(side, side, image::imageops::FilterType::Triangle)
    } else {
        decoded
    };
    let rgb = resized.into_rgb8();
    Ok(Image::from_rgb8(size, size, rgb.as_raw())?)
}
