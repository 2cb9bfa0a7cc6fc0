//! The tagger's forward pipeline: token embeddings with a character CNN,
//! dropout, an alternating (or stacked bidirectional) highway-LSTM stack and
//! the projection to per-tag emission scores.

mod dropout;
mod embed;
mod lstm;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::AutogradError;
use crate::crf::CrfError;

pub use dropout::{standard_mask, variational_mask, DropoutSpec};
pub use embed::{
    assemble_embeddings, char_cnn, CharCnnIds, CharVocab, ContextKey, ContextualProvider,
    Embeddings, JsonlContextual, WordTable, ZeroContextual, PAD, UNK,
};
pub use lstm::{alternating_highway_lstm, stacked_bilstm, CellIds, Direction};
pub use model::{count_parameters, project_to_tags, LayerIds, Model, ModelParamIds, ProjectionIds};

#[derive(Debug, Error)]
pub enum LayerError {
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty token")]
    EmptyToken,
    #[error("no contextual vector for token '{token}' ({doc_id}, sentence {sentence_index}, token {token_index})")]
    MissingContextual {
        token: String,
        doc_id: String,
        sentence_index: usize,
        token_index: usize,
    },
    #[error("vector for '{token}' has {got} dimensions, expected {expected}")]
    VectorDim {
        token: String,
        got: usize,
        expected: usize,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub word_dim: usize,
    pub contextual_dim: usize,
    pub char_out_dim: usize,
    pub char_emb_dim: usize,
    pub cnn_kernel: usize,
}

impl EmbeddingConfig {
    pub fn standard() -> Self {
        EmbeddingConfig {
            word_dim: 300,
            contextual_dim: 1024,
            char_out_dim: 128,
            char_emb_dim: 16,
            cnn_kernel: 3,
        }
    }

    /// Width of the concatenated word, contextual and character vectors.
    pub fn base_dim(&self) -> usize {
        self.word_dim + self.contextual_dim + self.char_out_dim
    }
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::standard()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Alternating,
    StackedBi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutMode {
    /// d1 on embeddings, variational d2 on every `h_t`, d3 before projection.
    Full,
    /// Plain dropout with rate d2 on the outputs of every layer but the last.
    BetweenLayersOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden: usize,
    pub layout: Layout,
    pub highway: bool,
    pub dropout_mode: DropoutMode,
    pub dropout: DropoutSpec,
    pub embedding: EmbeddingConfig,
    /// Direction of the first layer of the alternating stack.
    pub first_direction: Direction,
    pub use_overlap_levels: bool,
    pub use_translations: bool,
    pub use_in_title: bool,
}

impl ModelConfig {
    pub fn standard() -> Self {
        ModelConfig {
            num_layers: 4,
            hidden: 800,
            layout: Layout::Alternating,
            highway: true,
            dropout_mode: DropoutMode::Full,
            dropout: DropoutSpec::standard(),
            embedding: EmbeddingConfig::standard(),
            first_direction: Direction::LeftToRight,
            use_overlap_levels: true,
            use_translations: true,
            use_in_title: false,
        }
    }

    /// Desk-scale model: no word or contextual vectors, small hidden size.
    pub fn tiny() -> Self {
        ModelConfig {
            num_layers: 2,
            hidden: 16,
            dropout: DropoutSpec {
                d1: 0.0,
                d2: 0.0,
                d3: 0.0,
            },
            embedding: EmbeddingConfig {
                word_dim: 0,
                contextual_dim: 0,
                char_out_dim: 16,
                char_emb_dim: 8,
                cnn_kernel: 3,
            },
            ..ModelConfig::standard()
        }
    }

    /// Two stacked bidirectional layers of the given size.
    pub fn stacked(hidden: usize) -> Self {
        ModelConfig {
            num_layers: 2,
            hidden,
            layout: Layout::StackedBi,
            ..ModelConfig::standard()
        }
    }

    /// Named ablation variants of the standard model.
    pub fn ablation(name: &str) -> Option<Self> {
        let base = ModelConfig::standard();
        Some(match name {
            "LSTM-800" => ModelConfig::stacked(800),
            "LSTM-400" => ModelConfig::stacked(400),
            "NO-HIGHWAY" => ModelConfig {
                highway: false,
                ..base
            },
            "LSTM-400-DROPOUT" => ModelConfig {
                dropout_mode: DropoutMode::BetweenLayersOnly,
                ..ModelConfig::stacked(400)
            },
            "NO-OVERLAPS" => ModelConfig {
                use_overlap_levels: false,
                ..base
            },
            "NO-TRANSLATIONS" => ModelConfig {
                use_translations: false,
                ..base
            },
            "IN-TITLE" => ModelConfig {
                use_in_title: true,
                ..base
            },
            _ => return None,
        })
    }

    /// Features appended after d1: relative position, plus in-title if enabled.
    pub fn extra_feature_dims(&self) -> usize {
        1 + usize::from(self.use_in_title)
    }

    pub fn input_dim(&self) -> usize {
        self.embedding.base_dim() + self.extra_feature_dims()
    }

    /// Width of the per-token states fed to the projection.
    pub fn output_dim(&self) -> usize {
        match self.layout {
            Layout::Alternating => self.hidden,
            Layout::StackedBi => 2 * self.hidden,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_dimensions() {
        let c = ModelConfig::standard();
        assert_eq!(c.embedding.base_dim(), 1452);
        assert_eq!(c.input_dim(), 1453);
        assert_eq!(ModelConfig::ablation("IN-TITLE").unwrap().input_dim(), 1454);
        assert_eq!(ModelConfig::ablation("LSTM-400").unwrap().output_dim(), 800);
        assert!(ModelConfig::ablation("nope").is_none());
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let mut v = serde_json::to_value(ModelConfig::tiny()).unwrap();
        let back: ModelConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(back, ModelConfig::tiny());
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelConfig>(v).is_err());
    }
}
