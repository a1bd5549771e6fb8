//! `ablate`: run the hyper-parameter sweeps and write one table (CSV + SVG)
//! per axis plus a combined JSON document.

use std::path::Path;

use serde::Serialize;

use copresence_core::model::ModelConfig;
use copresence_core::sim::Dataset;
use copresence_core::train::{ablation_sweep, standard_axes, AblationTable, TrainConfig};

use crate::config::{load_config, resolve_model};
use crate::error::CliError;
use crate::figures::{self, fmt_num, BarSeries};

use super::{json_hash, meta_comments, meta_desc, opt_num, subsample, tool_version, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AxisArg {
    /// Latent dimensionality sweep.
    LatentSize,
    /// Regression loss sweep (l1 / smooth-l1 / l2).
    Loss,
    /// Divergence weight sweep.
    Lambda,
    /// All three axes.
    All,
}

#[derive(Serialize)]
struct AblationArtifact<'a> {
    tool_version: &'a str,
    config_hash: String,
    train: &'a TrainConfig,
    model: &'a ModelConfig,
    tables: &'a [AblationTable],
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    config_path: &Path,
    dataset_dir: &Path,
    out_dir: &Path,
    axis: AxisArg,
    epochs: Option<usize>,
    samples: Option<usize>,
) -> Result<(), CliError> {
    let file = load_config(config_path)?;
    let mut dataset = Dataset::load(dataset_dir)?;
    if let Some(cap) = samples {
        subsample(&mut dataset, cap);
    }
    let mut train_cfg = file.train.clone();
    if let Some(e) = epochs {
        train_cfg.epochs = e;
    }
    let model_cfg = resolve_model(&file.model, &dataset);

    let selected: Vec<_> = standard_axes()
        .into_iter()
        .filter(|a| {
            matches!(
                (axis, a.name()),
                (AxisArg::All, _)
                    | (AxisArg::LatentSize, "latent-size")
                    | (AxisArg::Loss, "loss")
                    | (AxisArg::Lambda, "lambda")
            )
        })
        .collect();

    std::fs::create_dir_all(out_dir)?;
    let config_hash = json_hash(&(&train_cfg, &model_cfg));
    let comments = meta_comments(&config_hash);

    let mut tables = Vec::with_capacity(selected.len());
    for ax in &selected {
        println!("sweeping {} ...", ax.name());
        let table = ablation_sweep(&dataset, &model_cfg, &train_cfg, ax)?;
        print_table(&table);
        write_table(out_dir, &table, &comments, &config_hash)?;
        tables.push(table);
    }

    write_json(
        &out_dir.join("ablation.json"),
        &AblationArtifact {
            tool_version: tool_version(),
            config_hash: config_hash.clone(),
            train: &train_cfg,
            model: &model_cfg,
            tables: &tables,
        },
    )?;
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn print_table(table: &AblationTable) {
    println!(
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>6}",
        table.axis, "ssd", "kl", "r2", "ce", "best"
    );
    for row in &table.rows {
        println!(
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>6}",
            row.value,
            fmt_num(row.ssd),
            fmt_num(row.kl),
            opt_num(row.r2),
            fmt_num(row.ce),
            row.best_epoch,
        );
    }
}

fn write_table(
    out_dir: &Path,
    table: &AblationTable,
    comments: &[String],
    config_hash: &str,
) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.value.clone(),
                r.ssd.to_string(),
                r.kl.to_string(),
                r.r2.map_or_else(String::new, |v| v.to_string()),
                r.ce.to_string(),
                r.best_epoch.to_string(),
                r.best_val_ssd.to_string(),
            ]
        })
        .collect();
    figures::write_csv(
        &out_dir.join(format!("ablation_{}.csv", table.axis)),
        comments,
        &["value", "ssd", "kl", "r2", "ce", "best_epoch", "best_val_ssd"],
        &rows,
    )?;

    let groups: Vec<String> = table.rows.iter().map(|r| r.value.clone()).collect();
    let bars = BarSeries {
        name: "ssd".into(),
        values: table.rows.iter().map(|r| r.ssd).collect(),
    };
    figures::write_text(
        &out_dir.join(format!("ablation_{}.svg", table.axis)),
        &figures::grouped_bar_chart(
            &format!("{} sweep: held-out ssd", table.axis),
            "ssd",
            &groups,
            &[bars],
            &meta_desc(config_hash),
        ),
    )?;
    Ok(())
}
