use serde::{Deserialize, Serialize};

use crate::error::{ConfigProblem, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    EvalLoss,
    EvalF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrfMode {
    /// Encoder and transitions trained together on the CRF likelihood.
    Joint,
    /// Encoder trained with token cross-entropy; transitions fitted on top of
    /// the frozen log-softmax scores and used only for decoding.
    DecodeOnly,
}

/// Flat tagger configuration, read from TOML with exactly these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub use_char_cnn: bool,
    pub char_kernel: usize,
    pub use_mha: bool,
    pub use_pos: bool,
    pub use_crf: bool,
    pub use_contextual_slot: bool,
    pub lstm_layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub early_stop_metric: StopMetric,
    pub seed: u64,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub pos_dim: usize,
    pub mha_heads: usize,
    pub bio_constraints: bool,
    pub crf_mode: CrfMode,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            use_char_cnn: false,
            char_kernel: 3,
            use_mha: false,
            use_pos: false,
            use_crf: true,
            use_contextual_slot: false,
            lstm_layers: 2,
            hidden: 32,
            dropout: 0.1,
            batch_size: 8,
            max_epochs: 30,
            patience: 5,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            early_stop_metric: StopMetric::EvalF1,
            seed: 42,
            word_dim: 16,
            char_dim: 8,
            char_filters: 16,
            pos_dim: 8,
            mha_heads: 2,
            bio_constraints: false,
            crf_mode: CrfMode::Joint,
        }
    }
}

impl TaggerConfig {
    /// Parses TOML; unknown keys and type errors are reported as config problems.
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = message
                .strip_prefix("unknown field `")
                .and_then(|rest| rest.split('`').next())
                .unwrap_or("<file>")
                .to_string();
            Error::Config(vec![ConfigProblem::new(key, message)])
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Collects every problem rather than stopping at the first.
    pub fn problems(&self) -> Vec<ConfigProblem> {
        let mut p = Vec::new();
        let mut check = |ok: bool, key: &str, msg: &str| {
            if !ok {
                p.push(ConfigProblem::new(key, msg));
            }
        };
        check(self.lstm_layers >= 1, "lstm_layers", "the BiLSTM encoder needs at least one layer");
        check(self.hidden > 0, "hidden", "must be positive");
        check(self.word_dim > 0, "word_dim", "must be positive");
        check(
            (0.0..1.0).contains(&self.dropout),
            "dropout",
            "must lie in [0, 1)",
        );
        check(self.batch_size >= 1, "batch_size", "must be at least 1");
        check(self.max_epochs >= 1, "max_epochs", "must be at least 1");
        check(self.patience >= 1, "patience", "must be at least 1");
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning_rate",
            "must be positive",
        );
        check(
            self.weight_decay >= 0.0 && self.weight_decay.is_finite(),
            "weight_decay",
            "must be non-negative",
        );
        if self.use_char_cnn {
            check(self.char_kernel > 0, "char_kernel", "must be positive");
            check(self.char_dim > 0, "char_dim", "must be positive");
            check(self.char_filters > 0, "char_filters", "must be positive");
        }
        if self.use_pos {
            check(self.pos_dim > 0, "pos_dim", "must be positive");
        }
        if self.use_mha {
            check(
                self.mha_heads > 0 && self.hidden > 0 && (2 * self.hidden) % self.mha_heads == 0,
                "mha_heads",
                "must be positive and divide 2 × hidden",
            );
        }
        if self.bio_constraints || self.crf_mode == CrfMode::DecodeOnly {
            check(self.use_crf, "use_crf", "bio_constraints and crf_mode = decode_only need the CRF head");
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Width of the concatenated input features.
    pub fn input_dim(&self, contextual_dim: usize) -> usize {
        self.word_dim
            + contextual_dim
            + if self.use_char_cnn { self.char_filters } else { 0 }
            + if self.use_pos { self.pos_dim } else { 0 }
    }
}
