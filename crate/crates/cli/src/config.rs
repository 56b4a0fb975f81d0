//! Run configuration: a TOML or JSON file with optional `train`, `model` and
//! `analysis` tables, overridden by command-line flags and echoed into the run
//! directory as `config.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blocksing::model::{CriticConfig, GeneratorConfig, ModelConfig};
use blocksing::training::TrainConfig;
use blocksing::vocoder::AnalysisConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Full,
    Tiny,
}

/// Model layout before the vocabulary sizes are known.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub preset: Preset,
    pub block_len: Option<usize>,
    pub generator: Option<GeneratorConfig>,
    pub critic: Option<CriticConfig>,
}

impl ModelSection {
    pub fn build(&self, n_phonemes: usize, n_singers: usize) -> ModelConfig {
        let mut cfg = match self.preset {
            Preset::Full => ModelConfig::new(n_phonemes, n_singers),
            Preset::Tiny => ModelConfig::tiny(n_phonemes, n_singers),
        };
        if let Some(b) = self.block_len {
            cfg.block_len = b;
        }
        if let Some(g) = &self.generator {
            cfg.generator = g.clone();
        }
        if let Some(c) = &self.critic {
            cfg.critic = c.clone();
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub train: TrainConfig,
    pub model: ModelSection,
    pub analysis: AnalysisConfig,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let cfg = if is_json {
            serde_json::from_str(&text).map_err(|e| blocksing::Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| blocksing::Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }
}

/// Effective configuration of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub analysis: AnalysisConfig,
}

pub const RUN_CONFIG: &str = "config.json";

impl RunConfig {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(RUN_CONFIG);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text).map_err(|e| blocksing::Error::Format(format!("{}: {e}", path.display())))?)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        fs::write(run_dir.join(RUN_CONFIG), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
