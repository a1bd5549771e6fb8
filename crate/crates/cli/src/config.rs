//! The single declarative config document: dataset generation, model shape
//! and training hyper-parameters in one TOML file with a strict schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use copresence_core::model::ModelConfig;
use copresence_core::sim::{Dataset, GenerateConfig};
use copresence_core::train::TrainConfig;

use crate::error::CliError;

pub const SEED_ENV: &str = "COPRESENCE_SEED";

/// Unknown keys are rejected at every level; every section is optional and
/// falls back to the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: GenerateConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Load and validate the config document. `COPRESENCE_SEED`, when set,
/// overrides both the dataset and the training seed so CI can fuzz runs
/// without editing files.
pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut config: ConfigFile =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed_override()? {
        config.dataset.seed = seed;
        config.train.seed = seed;
    }
    Ok(config)
}

pub fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(std::env::VarError::NotUnicode(_)) => Err(CliError::Config(format!(
            "{SEED_ENV} is not valid unicode"
        ))),
        Ok(raw) => raw.trim().parse::<u64>().map(Some).map_err(|_| {
            CliError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
        }),
    }
}

/// The model's input size and output width always follow the dataset the
/// run uses; keeping them in two places would only let them drift.
pub fn resolve_model(file_model: &ModelConfig, dataset: &Dataset) -> ModelConfig {
    ModelConfig {
        image_size: dataset.config.image_size,
        categories: dataset.categories.len(),
        ..file_model.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let cfg: ConfigFile = toml::from_str("").unwrap();
        assert_eq!(cfg, ConfigFile::default());
        assert_eq!(cfg.train.learning_rate, 2e-4);
        assert_eq!(cfg.dataset.count, 2000);
    }

    #[test]
    fn unknown_keys_are_rejected_at_both_levels() {
        assert!(toml::from_str::<ConfigFile>("[nonsense]\nx = 1\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[train]\nlerning_rate = 0.1\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[dataset]\ncout = 10\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[model]\ndeepth = 3\n").is_err());
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let cfg: ConfigFile =
            toml::from_str("[train]\nepochs = 3\n\n[dataset]\ncount = 10\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.dataset.count, 10);
        assert_eq!(cfg.dataset.image_size, 64);
    }
}
