//! One module per subcommand plus the small helpers they share.

pub mod ablate;
pub mod eval;
pub mod generate;
pub mod predict;
pub mod report;
pub mod train;

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use copresence_core::sim::{Dataset, Split};

use crate::error::CliError;

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Stable hex digest of any serializable value (used to stamp artifacts
/// with the config they came from).
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let body = serde_json::to_string(value).expect("config types serialize infallibly");
    let digest = Sha256::digest(body.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Metadata comment lines for CSV artifacts.
pub fn meta_comments(config_hash: &str) -> Vec<String> {
    vec![
        format!("tool_version: {}", tool_version()),
        format!("config_hash: {config_hash}"),
    ]
}

/// Metadata string for SVG `<desc>` elements.
pub fn meta_desc(config_hash: &str) -> String {
    format!("tool_version: {}; config_hash: {config_hash}", tool_version())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Cap each split at `cap` rows (in manifest order) for smoke runs.
pub fn subsample(dataset: &mut Dataset, cap: usize) {
    let mut kept = Vec::new();
    let (mut in_train, mut in_test) = (0usize, 0usize);
    for row in std::mem::take(&mut dataset.rows) {
        let taken = match row.split {
            Split::Train => {
                in_train += 1;
                in_train
            }
            Split::Test => {
                in_test += 1;
                in_test
            }
        };
        if taken <= cap {
            kept.push(row);
        }
    }
    dataset.rows = kept;
}

/// "n/a" for undefined optional metrics.
pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| crate::figures::fmt_num(x))
}

/// Signed percentage change against a baseline value.
pub fn delta_pct(ours: f64, base: f64) -> Option<f64> {
    (base != 0.0 && base.is_finite() && ours.is_finite()).then(|| (ours - base) / base * 100.0)
}

pub fn fmt_delta(d: Option<f64>) -> String {
    match d {
        Some(d) => format!("{}{:.1}%", if d >= 0.0 { "+" } else { "" }, d),
        None => "n/a".to_string(),
    }
}
