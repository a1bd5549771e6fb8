//! `report`: merge finished run directories into comparison tables and
//! figures. The first run is the baseline; every other run gets signed
//! percentage deltas against it.

use std::path::{Path, PathBuf};

use serde::Serialize;

use copresence_core::train::RunRecord;

use crate::error::CliError;
use crate::figures::{self, fmt_num, BarSeries, LineSeries};

use super::{delta_pct, fmt_delta, json_hash, meta_comments, meta_desc, opt_num, tool_version, write_json};

struct Run {
    label: String,
    record: RunRecord,
}

#[derive(Serialize)]
struct ReportArtifact<'a> {
    tool_version: &'a str,
    config_hash: String,
    baseline: &'a str,
    runs: Vec<RunEntry<'a>>,
}

#[derive(Serialize)]
struct RunEntry<'a> {
    label: &'a str,
    record: &'a RunRecord,
}

pub fn run(run_dirs: &[PathBuf], out_dir: &Path) -> Result<(), CliError> {
    let mut runs = Vec::with_capacity(run_dirs.len());
    for (i, dir) in run_dirs.iter().enumerate() {
        let path = dir.join("run.json");
        let record: RunRecord = serde_json::from_str(
            &std::fs::read_to_string(&path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        )?;
        let mut label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("run{i}"));
        if runs.iter().any(|r: &Run| r.label == label) {
            label = format!("{label}#{i}");
        }
        runs.push(Run { label, record });
    }

    let base = &runs[0];
    let categories = &base.record.final_eval.categories;
    for r in &runs[1..] {
        if &r.record.final_eval.categories != categories {
            return Err(CliError::Incompatible(format!(
                "run {} was evaluated on different categories than baseline {}",
                r.label, base.label
            )));
        }
    }
    let with_deltas = runs.len() > 1;

    print_overall(&runs, with_deltas);
    print_category_ssd(&runs, categories, with_deltas);

    std::fs::create_dir_all(out_dir)?;
    let config_hash = json_hash(&runs.iter().map(|r| &r.record.config_hash).collect::<Vec<_>>());
    let comments = meta_comments(&config_hash);
    write_category_csv(out_dir, &runs, categories, with_deltas, &comments)?;
    write_strata_csv(out_dir, &runs, with_deltas, &comments)?;
    write_figures(out_dir, &runs, categories, &config_hash)?;
    write_json(
        &out_dir.join("report.json"),
        &ReportArtifact {
            tool_version: tool_version(),
            config_hash: config_hash.clone(),
            baseline: &base.label,
            runs: runs
                .iter()
                .map(|r| RunEntry {
                    label: &r.label,
                    record: &r.record,
                })
                .collect(),
        },
    )?;
    println!("\nwrote {}", out_dir.display());
    Ok(())
}

fn print_overall(runs: &[Run], with_deltas: bool) {
    let base = &runs[0].record.final_eval.estimation;
    println!(
        "{:<20} {:>10} {:>10} {:>10} {:>10}{}",
        "run",
        "ssd",
        "kl",
        "r2",
        "ce",
        if with_deltas { "   vs baseline" } else { "" }
    );
    for (i, r) in runs.iter().enumerate() {
        let e = &r.record.final_eval.estimation;
        let delta = if with_deltas && i > 0 {
            format!(
                "   ssd {} r2 {}",
                fmt_delta(delta_pct(e.mean_ssd, base.mean_ssd)),
                match (e.mean_r2, base.mean_r2) {
                    (Some(a), Some(b)) => fmt_delta(delta_pct(a, b)),
                    _ => "n/a".to_string(),
                }
            )
        } else {
            String::new()
        };
        println!(
            "{:<20} {:>10} {:>10} {:>10} {:>10}{delta}",
            r.label,
            fmt_num(e.mean_ssd),
            fmt_num(e.mean_kl),
            opt_num(e.mean_r2),
            fmt_num(e.mean_ce),
        );
    }
}

fn print_category_ssd(runs: &[Run], categories: &[String], with_deltas: bool) {
    println!("\nper-category ssd");
    print!("{:<12}", "category");
    for r in runs {
        print!(" {:>14}", r.label.chars().take(14).collect::<String>());
    }
    if with_deltas {
        print!(" {:>10}", "Δ% (last)");
    }
    println!();
    for (c, name) in categories.iter().enumerate() {
        print!("{name:<12}");
        for r in runs {
            print!(
                " {:>14}",
                fmt_num(r.record.final_eval.per_category[c].metrics.ssd)
            );
        }
        if with_deltas {
            let base = runs[0].record.final_eval.per_category[c].metrics.ssd;
            let last = runs[runs.len() - 1].record.final_eval.per_category[c].metrics.ssd;
            print!(" {:>10}", fmt_delta(delta_pct(last, base)));
        }
        println!();
    }
}

fn write_category_csv(
    out_dir: &Path,
    runs: &[Run],
    categories: &[String],
    with_deltas: bool,
    comments: &[String],
) -> Result<(), CliError> {
    let mut header = vec!["run", "category", "ssd", "kl", "r2", "ce"];
    if with_deltas {
        header.extend(["ssd_delta_pct", "kl_delta_pct", "r2_delta_pct", "ce_delta_pct"]);
    }
    let base = &runs[0];
    let mut rows = Vec::new();
    for r in runs {
        for (c, name) in categories.iter().enumerate() {
            let m = &r.record.final_eval.per_category[c].metrics;
            let mut row = vec![
                r.label.clone(),
                name.clone(),
                m.ssd.to_string(),
                m.kl.to_string(),
                m.r2.map_or_else(String::new, |v| v.to_string()),
                m.ce.to_string(),
            ];
            if with_deltas {
                let b = &base.record.final_eval.per_category[c].metrics;
                row.push(csv_delta(delta_pct(m.ssd, b.ssd)));
                row.push(csv_delta(delta_pct(m.kl, b.kl)));
                row.push(match (m.r2, b.r2) {
                    (Some(a), Some(bb)) => csv_delta(delta_pct(a, bb)),
                    _ => String::new(),
                });
                row.push(csv_delta(delta_pct(m.ce, b.ce)));
            }
            rows.push(row);
        }
    }
    figures::write_csv(&out_dir.join("report_categories.csv"), comments, &header, &rows)
}

fn write_strata_csv(
    out_dir: &Path,
    runs: &[Run],
    with_deltas: bool,
    comments: &[String],
) -> Result<(), CliError> {
    let mut header = vec!["run", "stratum", "count", "ssd", "kl", "r2", "ce"];
    if with_deltas {
        header.push("ssd_delta_pct");
    }
    let base = &runs[0];
    let mut rows = Vec::new();
    for r in runs {
        for (s, row_s) in r.record.final_eval.per_stratum.iter().enumerate() {
            let mut row = vec![r.label.clone(), row_s.stratum.clone(), row_s.count.to_string()];
            match &row_s.summary {
                Some(sum) => {
                    row.push(sum.mean_ssd.to_string());
                    row.push(sum.mean_kl.to_string());
                    row.push(sum.mean_r2.map_or_else(String::new, |v| v.to_string()));
                    row.push(sum.mean_ce.to_string());
                    if with_deltas {
                        let b = base.record.final_eval.per_stratum.get(s).and_then(|x| x.summary.as_ref());
                        row.push(match b {
                            Some(b) => csv_delta(delta_pct(sum.mean_ssd, b.mean_ssd)),
                            None => String::new(),
                        });
                    }
                }
                None => {
                    row.extend([String::new(), String::new(), String::new(), String::new()]);
                    if with_deltas {
                        row.push(String::new());
                    }
                }
            }
            rows.push(row);
        }
    }
    figures::write_csv(&out_dir.join("report_strata.csv"), comments, &header, &rows)
}

fn write_figures(
    out_dir: &Path,
    runs: &[Run],
    categories: &[String],
    config_hash: &str,
) -> Result<(), CliError> {
    let meta = meta_desc(config_hash);
    let val_series: Vec<LineSeries> = runs
        .iter()
        .map(|r| LineSeries {
            name: r.label.clone(),
            points: r
                .record
                .epochs
                .iter()
                .map(|e| (e.epoch as f64, e.val_ssd))
                .collect(),
        })
        .collect();
    figures::write_text(
        &out_dir.join("val_ssd.svg"),
        &figures::line_chart("validation ssd", "epoch", "ssd", &val_series, &meta),
    )?;

    let loss_series: Vec<LineSeries> = runs
        .iter()
        .map(|r| LineSeries {
            name: r.label.clone(),
            points: r
                .record
                .epochs
                .iter()
                .map(|e| (e.epoch as f64, e.train_loss))
                .collect(),
        })
        .collect();
    figures::write_text(
        &out_dir.join("train_loss.svg"),
        &figures::line_chart("training loss", "epoch", "loss", &loss_series, &meta),
    )?;

    let bar_series: Vec<BarSeries> = runs
        .iter()
        .map(|r| BarSeries {
            name: r.label.clone(),
            values: r
                .record
                .final_eval
                .per_category
                .iter()
                .map(|c| c.metrics.ssd)
                .collect(),
        })
        .collect();
    figures::write_text(
        &out_dir.join("category_ssd.svg"),
        &figures::grouped_bar_chart("per-category ssd", "ssd", categories, &bar_series, &meta),
    )?;
    Ok(())
}

fn csv_delta(d: Option<f64>) -> String {
    d.map_or_else(String::new, |v| v.to_string())
}
