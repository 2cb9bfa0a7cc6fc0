//! Training (Adam, plateau halving, early stopping), document-level
//! cross-validation, checkpoints, ensembling and the preprocessing pipeline
//! that turns corpus documents into model input.

mod checkpoint;
mod ensemble;
mod fit;
mod folds;
mod optim;
mod pipeline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::encoding::EncodingError;
use crate::eval::EvalError;
use crate::layers::LayerError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use ensemble::{ensemble_predict, ensemble_vote};
pub use fit::{evaluate_exact, make_batches, sentence_mentions, train_model, EpochLog, TrainOutcome};
pub use folds::{cross_validate, CvOutcome, Fold, FoldPlan};
pub use optim::{adam_step, adam_update, AdamState, EarlyStopping, PlateauSchedule, BETA1, BETA2, EPSILON};
pub use pipeline::{
    gold_mentions, predict_document, prepare_document, prepare_documents, Prepared, TitleFeature,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite loss in epoch {epoch}; batch documents: {doc_ids:?}")]
    NonFinite { epoch: usize, doc_ids: Vec<String> },
    #[error("{docs} documents cannot fill {folds} folds")]
    TooFewDocuments { docs: usize, folds: usize },
    #[error("prediction {index} has {got} tags, expected {expected}")]
    LengthMismatch { index: usize, got: usize, expected: usize },
    #[error("no predictions to combine")]
    NoModels,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrHalving {
    pub min_delta: f64,
    pub patience: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub lr_halving: LrHalving,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub folds: usize,
    /// Train for exactly this many epochs without validation-driven stopping.
    #[serde(default)]
    pub fixed_epochs: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.001,
            batch_size: 32,
            lr_halving: LrHalving {
                min_delta: 0.001,
                patience: 5,
            },
            early_stop_patience: 10,
            max_epochs: 200,
            seed: 0,
            folds: 5,
            fixed_epochs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.lr_halving.patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive");
        }
        if self.lr_halving.min_delta < 0.0 {
            return bad("min_delta must be non-negative");
        }
        if self.folds < 2 {
            return bad("at least two folds are needed");
        }
        Ok(())
    }
}
