//! Layered configuration: built-in defaults, then a TOML file, then flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sqlmig::eval::ErrorThresholds;
use sqlmig::gap::{GapWeights, Quantize, DEFAULT_SAMPLES_PER_DAY, DEFAULT_TRAIN_RATIO};
use sqlmig::translate::{HttpLlmConfig, TranslationConfig};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Echo,
    RuleBaseline,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub http: HttpLlmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// `builtin` or an external command line.
    pub validator: String,
    pub thresholds: ErrorThresholds,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            validator: "builtin".into(),
            thresholds: ErrorThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    pub weights: GapWeights,
    pub quantize: Quantize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_ratio: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_ratio: DEFAULT_TRAIN_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YieldConfig {
    pub samples_per_day: f64,
}

impl Default for YieldConfig {
    fn default() -> Self {
        YieldConfig {
            samples_per_day: DEFAULT_SAMPLES_PER_DAY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub jobs: usize,
    pub seed: u64,
    pub translation: TranslationConfig,
    pub backend: BackendConfig,
    pub eval: EvalConfig,
    pub gap: GapConfig,
    pub dataset: DatasetConfig,
    #[serde(rename = "yield")]
    pub yield_: YieldConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }
}
