//! Experiment configuration files (TOML or JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::dataio::SyntheticCohortSpec;
use crate::eval::{AblationSelection, LosoConfig, DEFAULT_SEEDS};
use crate::features::FeatureConfig;
use crate::model::ModelConfig;
use crate::normalize::{NormalizeOptions, Strategy};
use crate::train::TrainConfig;

/// Where windows come from. At most one of the fields should be set; a
/// feature CSV wins over a session directory, which wins over a synthetic
/// spec.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSource {
    pub features: Option<PathBuf>,
    pub dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticCohortSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub strategy: Strategy,
    pub seeds: Vec<u64>,
    pub exclude_calibration: bool,
    pub output: Option<PathBuf>,
    pub normalize: NormalizeOptions,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ablation: AblationSelection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            strategy: Strategy::ParticipantAware,
            seeds: DEFAULT_SEEDS.to_vec(),
            exclude_calibration: false,
            output: None,
            normalize: NormalizeOptions::default(),
            features: FeatureConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            ablation: AblationSelection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self, CliError> {
        match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| CliError::Config(e.to_string())),
            ConfigFormat::Json => serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn dump(&self, format: ConfigFormat) -> Result<String, CliError> {
        match format {
            ConfigFormat::Toml => toml::to_string(self).map_err(|e| CliError::Config(e.to_string())),
            ConfigFormat::Json => serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, ConfigFormat::from_path(path)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(s) = &self.data.synthetic {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn loso(&self, tag: &str) -> LosoConfig {
        LosoConfig {
            strategy: self.strategy,
            normalize: self.normalize,
            seeds: self.seeds.clone(),
            exclude_calibration: self.exclude_calibration,
            ablation_tag: tag.to_string(),
            ..LosoConfig::default()
        }
    }
}
