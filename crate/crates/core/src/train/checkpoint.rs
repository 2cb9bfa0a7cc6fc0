use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autograd::ParamStore;
use crate::encoding::TagSet;
use crate::layers::{CharVocab, Model, ModelConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub tag_set: TagSet,
    pub char_vocab: CharVocab,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn of(model: &Model) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            tag_set: model.tag_set.clone(),
            char_vocab: model.char_vocab.clone(),
            params: model.store.clone(),
        }
    }

    /// Rebuilds the model, checking every parameter name and shape.
    pub fn into_model(self) -> Result<Model, String> {
        if self.version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {}", self.version));
        }
        let mut model = Model::new(self.config, self.tag_set, self.char_vocab, 0);
        let expected = model.store.entries();
        let got = self.params.entries();
        if expected.len() != got.len() {
            return Err(format!("expected {} parameter tensors, found {}", expected.len(), got.len()));
        }
        for (e, g) in expected.iter().zip(got) {
            if e.name != g.name || e.value.shape() != g.value.shape() {
                return Err(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    g.name,
                    g.value.shape(),
                    e.name,
                    e.value.shape()
                ));
            }
        }
        model.store = self.params;
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), TrainError> {
    let err = |message: String| TrainError::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let json = serde_json::to_string(&Checkpoint::of(model)).map_err(|e| err(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| err(e.to_string()))
}

/// Loads a checkpoint; with `expected` given, its model configuration must
/// match exactly.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Model, TrainError> {
    let err = |message: String| TrainError::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let raw = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let ck: Checkpoint = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
    if let Some(cfg) = expected {
        if *cfg != ck.config {
            return Err(err("model configuration differs from the requested one".into()));
        }
    }
    ck.into_model().map_err(err)
}
