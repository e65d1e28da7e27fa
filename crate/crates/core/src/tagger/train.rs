use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::StopMetric;
use super::context::ContextualVectors;
use super::model::{predict_corpus, TaggerModel};
use super::TokenPrediction;
use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::nn::Adam;

/// Patience-based stopping on a dev metric. An epoch improves only on a
/// strictly better value; ties count toward patience.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    metric: StopMetric,
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(metric: StopMetric, patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        Ok(Self {
            metric,
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        })
    }

    /// Records the metric of `epoch` and returns whether it improved.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        let improved = match (self.best, self.metric) {
            _ if value.is_nan() => false,
            (None, _) => true,
            (Some(b), StopMetric::EvalLoss) => value < b,
            (Some(b), StopMetric::EvalF1) => value > b,
        };
        if improved {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    /// 0 until the first observation.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub early_stopped: bool,
}

impl TrainHistory {
    /// One line per epoch plus a trailing `#` summary line.
    pub fn render_log(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            writeln!(
                out,
                "epoch={} train_loss={} eval_loss={} eval_macro_f1={}",
                r.epoch, r.train_loss, r.eval_loss, r.eval_macro_f1
            )
            .unwrap();
        }
        writeln!(
            out,
            "# stopped_epoch={} best_epoch={} early_stopped={}",
            self.stopped_epoch, self.best_epoch, self.early_stopped
        )
        .unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    /// Mean per-sentence loss in evaluation mode.
    pub loss: f64,
    pub report: EvalReport,
    pub predictions: Vec<Vec<TokenPrediction>>,
}

pub fn evaluate_model(
    model: &TaggerModel,
    corpus: &LabeledCorpus,
    contextual: Option<&ContextualVectors>,
) -> Result<ModelEvaluation> {
    let mut total = 0.0;
    for s in &corpus.sentences {
        total += model.loss(s, contextual)?;
    }
    let predictions = predict_corpus(model, corpus, contextual)?;
    let labels: Vec<Vec<&str>> = predictions
        .iter()
        .map(|s| s.iter().map(|p| p.label.as_str()).collect())
        .collect();
    let report = evaluate(corpus, &labels)?;
    Ok(ModelEvaluation {
        loss: total / corpus.len().max(1) as f64,
        report,
        predictions,
    })
}

pub fn train(
    model: TaggerModel,
    train: &LabeledCorpus,
    dev: &LabeledCorpus,
    contextual: Option<&ContextualVectors>,
) -> Result<(TaggerModel, TrainHistory)> {
    train_with(model, train, dev, contextual, |_| {})
}

/// Mini-batch training with per-epoch dev evaluation. Returns the snapshot
/// from the best epoch; `on_epoch` sees every record as it is produced.
pub fn train_with<F>(
    mut model: TaggerModel,
    train: &LabeledCorpus,
    dev: &LabeledCorpus,
    contextual: Option<&ContextualVectors>,
    mut on_epoch: F,
) -> Result<(TaggerModel, TrainHistory)>
where
    F: FnMut(&EpochRecord),
{
    if train.is_empty() || dev.is_empty() {
        return Err(Error::InvalidArgument("training and dev corpora must be non-empty".into()));
    }
    let config = model.config.clone();
    config.validate()?;
    let adam = Adam::new(config.learning_rate, config.weight_decay)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut stopper = EarlyStopping::new(config.early_stop_metric, config.patience)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_params = model.params.clone();
    let mut epochs = Vec::new();
    let mut step = 0u64;
    let mut early_stopped = false;

    model.params.zero_grads();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let sentence = &train.sentences[i];
                let loss = model.accumulate(sentence, contextual, &mut dropout_rng)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss {loss} at epoch {epoch}, sentence `{}`",
                        sentence.id
                    )));
                }
                total += loss;
            }
            model.params.scale_grads(1.0 / batch.len() as f64);
            step += 1;
            adam.step(&mut model.params, step)?;
        }
        let eval = evaluate_model(&model, dev, contextual)?;
        if !eval.loss.is_finite() {
            return Err(Error::NonFinite(format!("dev loss {} at epoch {epoch}", eval.loss)));
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            eval_loss: eval.loss,
            eval_macro_f1: eval.report.macro_f1,
        };
        on_epoch(&record);
        epochs.push(record);
        let value = match config.early_stop_metric {
            StopMetric::EvalLoss => record.eval_loss,
            StopMetric::EvalF1 => record.eval_macro_f1,
        };
        if stopper.observe(epoch, value) {
            best_params = model.params.clone();
        }
        if stopper.should_stop() {
            early_stopped = true;
            break;
        }
    }
    let stopped_epoch = epochs.len();
    model.params = best_params;
    Ok((
        model,
        TrainHistory {
            epochs,
            stopped_epoch,
            best_epoch: stopper.best_epoch(),
            early_stopped,
        },
    ))
}
