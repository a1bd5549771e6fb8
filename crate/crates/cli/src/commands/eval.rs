//! `eval`: score a checkpoint against a dataset split and print/write the
//! estimation and classification tables.

use std::path::Path;

use serde::Serialize;

use copresence_core::model::{ModelConfig, ModelParams};
use copresence_core::sim::{Dataset, Split};
use copresence_core::train::{evaluate, EvalReport};

use crate::error::CliError;
use crate::figures::{self, fmt_num, BarSeries};

use super::{json_hash, meta_comments, meta_desc, opt_num, tool_version, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Track {
    /// Probability-vector regression metrics (SSD / KL / R2 / CE).
    Estimation,
    /// Thresholded multi-label metrics (AP / AR / AF1 / OP / OR / OF1).
    Classification,
    /// Both tracks.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    pub fn to_split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Serialize)]
struct EvalArtifact<'a> {
    tool_version: &'a str,
    config_hash: String,
    model: &'a ModelConfig,
    categories: &'a [String],
    report: &'a EvalReport,
}

pub fn run(
    checkpoint: &Path,
    dataset_dir: &Path,
    track: Track,
    split: SplitArg,
    out_dir: Option<&Path>,
) -> Result<(), CliError> {
    let saved = ModelParams::load(checkpoint)?;
    let dataset = Dataset::load(dataset_dir)?;
    if saved.categories != dataset.categories {
        return Err(CliError::Incompatible(format!(
            "checkpoint was trained on categories {:?}, dataset provides {:?}",
            saved.categories, dataset.categories
        )));
    }

    let report = evaluate(&saved.params, &dataset, split.to_split())?;
    print_report(&report, track);

    if let Some(dir) = out_dir {
        write_eval_dir(dir, &report, &saved.params.config, &saved.categories, track)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

pub fn print_report(report: &EvalReport, track: Track) {
    println!(
        "split {:?}: {} samples, threshold {}",
        report.split, report.count, report.threshold
    );
    if matches!(track, Track::Estimation | Track::All) {
        let e = &report.estimation;
        println!(
            "estimation  ssd {}  kl {}  r2 {}  ce {}  mae {}",
            fmt_num(e.mean_ssd),
            fmt_num(e.mean_kl),
            opt_num(e.mean_r2),
            fmt_num(e.mean_ce),
            fmt_num(e.mean_mae),
        );
        println!("\n{:<12} {:>10} {:>10} {:>10} {:>10}", "category", "ssd", "kl", "r2", "ce");
        for row in &report.per_category {
            println!(
                "{:<12} {:>10} {:>10} {:>10} {:>10}",
                row.category,
                fmt_num(row.metrics.ssd),
                fmt_num(row.metrics.kl),
                opt_num(row.metrics.r2),
                fmt_num(row.metrics.ce),
            );
        }
        println!("\n{:<8} {:>6} {:>10} {:>10} {:>10} {:>10}", "stratum", "count", "ssd", "kl", "r2", "ce");
        for row in &report.per_stratum {
            match &row.summary {
                Some(s) => println!(
                    "{:<8} {:>6} {:>10} {:>10} {:>10} {:>10}",
                    row.stratum,
                    row.count,
                    fmt_num(s.mean_ssd),
                    fmt_num(s.mean_kl),
                    opt_num(s.mean_r2),
                    fmt_num(s.mean_ce),
                ),
                None => println!("{:<8} {:>6} {:>10}", row.stratum, row.count, "-"),
            }
        }
    }
    if matches!(track, Track::Classification | Track::All) {
        let c = &report.classification;
        println!(
            "\nclassification  AP {}  AR {}  AF1 {}  OP {}  OR {}  OF1 {}",
            opt_num(c.macro_precision),
            opt_num(c.macro_recall),
            opt_num(c.macro_f1),
            opt_num(c.micro_precision),
            opt_num(c.micro_recall),
            opt_num(c.micro_f1),
        );
        println!("{:<12} {:>10} {:>10} {:>10}", "category", "precision", "recall", "f1");
        for (name, score) in report.categories.iter().zip(&c.per_category) {
            println!(
                "{:<12} {:>10} {:>10} {:>10}",
                name,
                opt_num(score.precision),
                opt_num(score.recall),
                opt_num(score.f1),
            );
        }
    }
}

fn write_eval_dir(
    dir: &Path,
    report: &EvalReport,
    model: &ModelConfig,
    categories: &[String],
    track: Track,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let config_hash = json_hash(model);
    let comments = meta_comments(&config_hash);

    write_json(
        &dir.join("eval.json"),
        &EvalArtifact {
            tool_version: tool_version(),
            config_hash: config_hash.clone(),
            model,
            categories,
            report,
        },
    )?;

    if matches!(track, Track::Estimation | Track::All) {
        let rows: Vec<Vec<String>> = report
            .per_category
            .iter()
            .map(|r| {
                vec![
                    r.category.clone(),
                    r.metrics.ssd.to_string(),
                    r.metrics.kl.to_string(),
                    r.metrics.r2.map_or_else(|| "".into(), |v| v.to_string()),
                    r.metrics.ce.to_string(),
                ]
            })
            .collect();
        figures::write_csv(
            &dir.join("eval_categories.csv"),
            &comments,
            &["category", "ssd", "kl", "r2", "ce"],
            &rows,
        )?;

        let rows: Vec<Vec<String>> = report
            .per_stratum
            .iter()
            .map(|r| match &r.summary {
                Some(s) => vec![
                    r.stratum.clone(),
                    r.count.to_string(),
                    s.mean_ssd.to_string(),
                    s.mean_kl.to_string(),
                    s.mean_r2.map_or_else(|| "".into(), |v| v.to_string()),
                    s.mean_ce.to_string(),
                ],
                None => vec![r.stratum.clone(), "0".into(), "".into(), "".into(), "".into(), "".into()],
            })
            .collect();
        figures::write_csv(
            &dir.join("eval_strata.csv"),
            &comments,
            &["stratum", "count", "ssd", "kl", "r2", "ce"],
            &rows,
        )?;

        let bars = BarSeries {
            name: report.split.clone(),
            values: report.per_category.iter().map(|r| r.metrics.ssd).collect(),
        };
        figures::write_text(
            &dir.join("category_ssd.svg"),
            &figures::grouped_bar_chart(
                "per-category ssd",
                "ssd",
                &report.categories,
                &[bars],
                &meta_desc(&config_hash),
            ),
        )?;
    }

    if matches!(track, Track::Classification | Track::All) {
        let c = &report.classification;
        let rows: Vec<Vec<String>> = report
            .categories
            .iter()
            .zip(&c.per_category)
            .map(|(name, s)| {
                vec![
                    name.clone(),
                    s.tp.to_string(),
                    s.fp.to_string(),
                    s.fn_.to_string(),
                    s.tn.to_string(),
                    s.precision.map_or_else(|| "".into(), |v| v.to_string()),
                    s.recall.map_or_else(|| "".into(), |v| v.to_string()),
                    s.f1.map_or_else(|| "".into(), |v| v.to_string()),
                ]
            })
            .collect();
        figures::write_csv(
            &dir.join("eval_classification.csv"),
            &comments,
            &["category", "tp", "fp", "fn", "tn", "precision", "recall", "f1"],
            &rows,
        )?;
    }
    Ok(())
}
