//! `generate`: build a dataset directory from the config's `[dataset]`
//! section. Rerunning over an existing dataset verifies byte-identity
//! instead of silently clobbering it.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use copresence_core::sim::{generate_dataset, GenerateConfig};

use crate::config::load_config;
use crate::error::CliError;

pub fn run(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;

    let prior_digest = if out_dir.join("manifest.jsonl").exists() {
        let stored_path = out_dir.join("generate_config.json");
        let stored: GenerateConfig = serde_json::from_str(
            &std::fs::read_to_string(&stored_path)
                .map_err(|e| CliError::Io(format!("{}: {e}", stored_path.display())))?,
        )?;
        if stored != config.dataset {
            return Err(CliError::Config(format!(
                "{} already holds a dataset generated from a different config; \
                 use a fresh directory",
                out_dir.display()
            )));
        }
        Some(dir_digest(out_dir)?)
    } else {
        None
    };

    let summary = generate_dataset(&config.dataset, out_dir)?;

    match prior_digest {
        Some(before) if before == dir_digest(out_dir)? => {
            println!("dataset unchanged (byte-identical rerun)");
        }
        Some(_) => println!("dataset refreshed (previous copy differed)"),
        None => {}
    }
    println!("{summary}");
    println!("wrote {}", out_dir.display());
    Ok(())
}

/// Digest of every file under `dir`: sorted relative paths and contents.
fn dir_digest(dir: &Path) -> Result<[u8; 32], CliError> {
    let mut files: Vec<PathBuf> = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        hasher.update(std::fs::read(dir.join(&rel))?);
    }
    Ok(hasher.finalize().into())
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(
                path.strip_prefix(root)
                    .expect("walk stays under root")
                    .to_path_buf(),
            );
        }
    }
    Ok(())
}
