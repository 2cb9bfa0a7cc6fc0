use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srtag::corpus::OffsetPolicy;
use srtag::encoding::EncodeOptions;
use srtag::layers::ModelConfig;
use srtag::train::TrainConfig;

use crate::CliError;

/// File locations. Command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    /// Word vectors, one `token v1 .. vD` line per word.
    pub vectors: Option<PathBuf>,
    /// Precomputed contextual vectors as JSON lines.
    pub contextual: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// JSON cache of document titles, used when the in-title feature is on.
    pub titles: Option<PathBuf>,
    /// Literature service queried for titles missing from the cache.
    pub title_url: Option<String>,
}

/// Everything a run needs besides the subcommand flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Explicit model configuration; exclusive with `ablation`.
    pub model: Option<ModelConfig>,
    /// Named model variant, e.g. `NO-HIGHWAY` or `LSTM-400`.
    pub ablation: Option<String>,
    pub train: TrainConfig,
    pub paths: Paths,
    pub offset_policy: OffsetPolicy,
    pub max_gap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            ablation: None,
            train: TrainConfig::default(),
            paths: Paths::default(),
            offset_policy: OffsetPolicy::Auto,
            max_gap: EncodeOptions::default().max_gap,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        let config: RunConfig =
            serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model.is_some() && self.ablation.is_some() {
            return Err("`model` and `ablation` are mutually exclusive".into());
        }
        let model = self.model_config()?;
        if !model.dropout.is_valid() {
            return Err("dropout rates must lie in [0, 1)".into());
        }
        if model.num_layers == 0 || model.hidden == 0 {
            return Err("model needs at least one layer of non-zero width".into());
        }
        self.train.validate().map_err(|e| e.to_string())
    }

    pub fn model_config(&self) -> Result<ModelConfig, String> {
        match (&self.model, &self.ablation) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(name)) => ModelConfig::ablation(name).ok_or_else(|| format!("unknown ablation '{name}'")),
            (None, None) => Ok(ModelConfig::default()),
        }
    }

    pub fn encode_options(&self, model: &ModelConfig) -> EncodeOptions {
        EncodeOptions {
            max_gap: self.max_gap,
            overlap_levels: model.use_overlap_levels,
        }
    }
}
