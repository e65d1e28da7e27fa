//! Threshold-gated majority voting over per-token predictions.
//!
//! For each token every model casts one `(label, score)` vote. Votes with a
//! score at or below the threshold are dropped; a label wins outright when it
//! holds strictly more than half of the votes counted against the configured
//! basis (all participating models by default). Otherwise a fallback decides.
//! Voting happens on raw labels and the voted sequence is repaired once.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::corpus::{repair_bio, Bio, LabeledCorpus, OUTSIDE};
use crate::error::{Error, Result};
use crate::tagger::TokenPrediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Label with the highest summed surviving score; ties go to the
    /// lexicographically smallest label.
    #[default]
    HighestTotalScore,
    /// Emit `O` whenever no label has a majority.
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MajorityBasis {
    /// More than half of all participating models.
    #[default]
    AllModels,
    /// More than half of the votes that survived thresholding.
    SurvivingVotes,
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::HighestTotalScore => "highest-total-score",
            Fallback::Outside => "outside",
        })
    }
}

impl fmt::Display for MajorityBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MajorityBasis::AllModels => "all-models",
            MajorityBasis::SurvivingVotes => "surviving-votes",
        })
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteConfig {
    pub score_threshold: f64,
    pub fallback: Fallback,
    pub majority: MajorityBasis,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            score_threshold: DEFAULT_THRESHOLD,
            fallback: Fallback::default(),
            majority: MajorityBasis::default(),
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::InvalidArgument(format!(
                "score threshold must lie in [0, 1], got {}",
                self.score_threshold
            )));
        }
        Ok(())
    }
}

/// Result of voting on one token.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    pub label: String,
    pub models: usize,
    pub surviving: usize,
    /// Surviving votes for the chosen label.
    pub winner_votes: usize,
    pub fallback_used: bool,
}

impl VoteOutcome {
    /// Share of all models that voted (above threshold) for the chosen label.
    pub fn score(&self) -> f64 {
        self.winner_votes as f64 / self.models as f64
    }
}

pub fn majority_vote(votes: &[TokenPrediction], config: &VoteConfig) -> Result<VoteOutcome> {
    if votes.is_empty() {
        return Err(Error::InvalidArgument("majority vote needs at least one vote".into()));
    }
    config.validate()?;
    let mut tally: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for v in votes.iter().filter(|v| v.score > config.score_threshold) {
        tally.entry(v.label.as_str()).or_default().push(v.score);
    }
    let surviving: usize = tally.values().map(Vec::len).sum();
    let models = votes.len();
    let outcome = |label: &str, winner_votes: usize, fallback_used: bool| VoteOutcome {
        label: label.to_string(),
        models,
        surviving,
        winner_votes,
        fallback_used,
    };
    if surviving == 0 {
        return Ok(outcome(OUTSIDE, 0, false));
    }
    let basis = match config.majority {
        MajorityBasis::AllModels => models,
        MajorityBasis::SurvivingVotes => surviving,
    };
    if let Some((label, scores)) = tally.iter().find(|(_, s)| 2 * s.len() > basis) {
        return Ok(outcome(label, scores.len(), false));
    }
    match config.fallback {
        Fallback::Outside => {
            let n = tally.get(OUTSIDE).map_or(0, Vec::len);
            Ok(outcome(OUTSIDE, n, true))
        }
        Fallback::HighestTotalScore => {
            let mut best: Option<(&str, f64, usize)> = None;
            // BTreeMap order makes the first of equal totals the smallest label.
            for (label, scores) in &mut tally {
                scores.sort_by(f64::total_cmp);
                let total: f64 = scores.iter().sum();
                if best.is_none_or(|(_, t, _)| total > t) {
                    best = Some((label, total, scores.len()));
                }
            }
            let (label, _, n) = best.expect("at least one surviving label");
            Ok(outcome(label, n, true))
        }
    }
}

/// One sentence of a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub gold: Option<Vec<String>>,
    pub predictions: Vec<TokenPrediction>,
}

/// All predictions of one model, aligned to a reference corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    pub sentences: Vec<PredictedSentence>,
}

impl PredictionSet {
    /// Parses `token [gold] predicted score` lines grouped into `# id` sentences.
    pub fn parse(text: &str, model_id: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            source_name: model_id.to_string(),
            line,
            message,
        };
        let mut sentences = Vec::new();
        let mut current: Option<PredictedSentence> = None;
        let mut pending_id: Option<String> = None;
        let mut width = None;
        let mut generated = 0;
        let flush = |current: &mut Option<PredictedSentence>, sentences: &mut Vec<PredictedSentence>| {
            if let Some(s) = current.take() {
                sentences.push(s);
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if raw.trim().is_empty() {
                flush(&mut current, &mut sentences);
                continue;
            }
            if current.is_none() && raw.starts_with('#') {
                let mut words = raw[1..].split_whitespace();
                pending_id = match words.next() {
                    Some("id") => words.next().map(str::to_string),
                    other => other.map(str::to_string),
                };
                continue;
            }
            let fields: Vec<&str> = raw.split_whitespace().collect();
            let w = *width.get_or_insert(fields.len());
            if fields.len() != w || !(3..=4).contains(&w) {
                return Err(err(
                    line_no,
                    format!("expected 3 or 4 columns consistently, found {}", fields.len()),
                ));
            }
            let score: f64 = fields[w - 1]
                .parse()
                .ok()
                .filter(|s: &f64| (0.0..=1.0).contains(s))
                .ok_or_else(|| err(line_no, format!("score `{}` is not in [0, 1]", fields[w - 1])))?;
            let label = fields[w - 2];
            Bio::parse(label).map_err(|e| err(line_no, e.to_string()))?;
            let sentence = current.get_or_insert_with(|| {
                let id = pending_id.take().unwrap_or_else(|| {
                    generated += 1;
                    format!("s{generated}")
                });
                PredictedSentence {
                    id,
                    tokens: Vec::new(),
                    gold: (w == 4).then(Vec::new),
                    predictions: Vec::new(),
                }
            });
            sentence.tokens.push(fields[0].to_string());
            if let Some(gold) = &mut sentence.gold {
                gold.push(fields[1].to_string());
            }
            sentence.predictions.push(TokenPrediction::new(label, score));
        }
        flush(&mut current, &mut sentences);
        if sentences.is_empty() {
            return Err(err(1, "no predictions found".into()));
        }
        Ok(Self {
            model_id: model_id.to_string(),
            sentences,
        })
    }

    /// Errors unless sentence ids and token counts match `reference`.
    pub fn check_aligned(&self, reference: &LabeledCorpus) -> Result<()> {
        if self.sentences.len() != reference.len() {
            return Err(Error::Alignment(format!(
                "model `{}` has {} sentences, reference has {}",
                self.model_id,
                self.sentences.len(),
                reference.len()
            )));
        }
        for (p, r) in self.sentences.iter().zip(&reference.sentences) {
            if p.id != r.id || p.predictions.len() != r.len() {
                return Err(Error::Alignment(format!(
                    "model `{}` sentence `{}` ({} tokens) does not match reference sentence `{}` ({} tokens)",
                    self.model_id,
                    p.id,
                    p.predictions.len(),
                    r.id,
                    r.len()
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<Vec<String>> {
        self.sentences
            .iter()
            .map(|s| s.predictions.iter().map(|p| p.label.clone()).collect())
            .collect()
    }
}

/// Writes `token [gold] predicted score` lines; the gold column is present
/// only for labeled corpora.
pub fn write_predictions(corpus: &LabeledCorpus, predictions: &[Vec<TokenPrediction>]) -> Result<String> {
    crate::corpus::check_alignment(corpus, predictions.iter().map(Vec::len))?;
    let mut out = String::new();
    for (si, (s, preds)) in corpus.sentences.iter().zip(predictions).enumerate() {
        if si > 0 {
            out.push('\n');
        }
        writeln!(out, "# id {}", s.id).unwrap();
        for (t, p) in s.tokens.iter().zip(preds) {
            out.push_str(&t.surface);
            if corpus.labeled {
                out.push(' ');
                out.push_str(&t.gold_tag);
            }
            writeln!(out, " {} {}", p.label, p.score).unwrap();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    /// Voted and repaired labels with the vote share as score.
    pub predictions: Vec<Vec<TokenPrediction>>,
    pub diagnostics: Vec<Vec<VoteOutcome>>,
}

impl EnsembleOutput {
    pub fn labels(&self) -> Vec<Vec<String>> {
        self.predictions
            .iter()
            .map(|s| s.iter().map(|p| p.label.clone()).collect())
            .collect()
    }

    pub fn fallback_count(&self) -> usize {
        self.diagnostics.iter().flatten().filter(|d| d.fallback_used).count()
    }
}

pub fn ensemble_corpus(sets: &[PredictionSet], reference: &LabeledCorpus, config: &VoteConfig) -> Result<EnsembleOutput> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an ensemble needs at least 2 prediction sets, got {}",
            sets.len()
        )));
    }
    config.validate()?;
    for set in sets {
        set.check_aligned(reference)?;
    }
    let mut predictions = Vec::with_capacity(reference.len());
    let mut diagnostics = Vec::with_capacity(reference.len());
    for (si, sentence) in reference.sentences.iter().enumerate() {
        let mut outcomes = Vec::with_capacity(sentence.len());
        for ti in 0..sentence.len() {
            let votes: Vec<TokenPrediction> = sets
                .iter()
                .map(|s| s.sentences[si].predictions[ti].clone())
                .collect();
            outcomes.push(majority_vote(&votes, config)?);
        }
        let raw: Vec<&str> = outcomes.iter().map(|o| o.label.as_str()).collect();
        let repaired = repair_bio(&raw);
        predictions.push(
            repaired
                .into_iter()
                .zip(&outcomes)
                .map(|(label, o)| TokenPrediction::new(label, o.score()))
                .collect(),
        );
        diagnostics.push(outcomes);
    }
    Ok(EnsembleOutput {
        predictions,
        diagnostics,
    })
}

/// Diagnostics sidecar: a commented header followed by one tab-separated
/// row per token.
pub fn render_diagnostics(
    output: &EnsembleOutput,
    reference: &LabeledCorpus,
    model_ids: &[String],
    config: &VoteConfig,
    threshold_is_default: bool,
) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# threshold={}{}",
        config.score_threshold,
        if threshold_is_default { " (default)" } else { "" }
    )
    .unwrap();
    writeln!(out, "# majority={}", config.majority).unwrap();
    writeln!(out, "# fallback={}", config.fallback).unwrap();
    writeln!(out, "# models={}", model_ids.join(",")).unwrap();
    writeln!(out, "# fallback_activations={}", output.fallback_count()).unwrap();
    writeln!(out, "sentence_id\ttoken_index\tsurviving\twinner_votes\tfallback\tvoted\tfinal").unwrap();
    for ((s, outcomes), preds) in reference.sentences.iter().zip(&output.diagnostics).zip(&output.predictions) {
        for (ti, (o, p)) in outcomes.iter().zip(preds).enumerate() {
            writeln!(
                out,
                "{}\t{ti}\t{}\t{}\t{}\t{}\t{}",
                s.id,
                o.surviving,
                o.winner_votes,
                if o.fallback_used { "yes" } else { "no" },
                o.label,
                p.label
            )
            .unwrap();
        }
    }
    out
}
