//! Neural sequence tagger: configuration, model assembly, training with early
//! stopping, prediction and model files.
//!
//! Feature pipeline per sentence:
//! `word ∥ contextual ∥ char-CNN ∥ POS → dropout → BiLSTM → [MHA] → linear`,
//! followed by a softmax or a linear-chain CRF.

mod config;
mod context;
mod io;
mod model;
mod train;
mod vocab;

use serde::{Deserialize, Serialize};

pub use config::{CrfMode, StopMetric, TaggerConfig};
pub use context::ContextualVectors;
pub use io::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use model::{build_model, predict_corpus, TaggerModel};
pub use train::{evaluate_model, train, train_with, EarlyStopping, EpochRecord, ModelEvaluation, TrainHistory};
pub use vocab::{Vocab, UNKNOWN};

/// A predicted label with a confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub label: String,
    pub score: f64,
}

impl TokenPrediction {
    pub fn new(label: impl Into<String>, score: f64) -> Self {
        Self {
            label: label.into(),
            score,
        }
    }
}
