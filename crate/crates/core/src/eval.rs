//! Chunk-level precision, recall and F1.
//!
//! A predicted chunk counts only when class, start and end all match a gold
//! chunk. Empty denominators yield 0, and such classes still take part in the
//! macro average. The macro average runs over every class present in gold or
//! predictions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{check_alignment, extract_chunks, Chunk, LabeledCorpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold chunks of this class.
    pub support: usize,
    pub predicted: usize,
    pub true_positives: usize,
}

impl ClassScores {
    pub fn from_counts(true_positives: usize, predicted: usize, support: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            support,
            predicted,
            true_positives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: BTreeMap<String, ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub token_accuracy: f64,
}

impl EvalReport {
    /// Builds a report from per-class counts `(tp, predicted, gold)`.
    pub fn from_counts(counts: &BTreeMap<String, (usize, usize, usize)>, token_accuracy: f64) -> Self {
        let classes: BTreeMap<String, ClassScores> = counts
            .iter()
            .map(|(c, &(tp, p, g))| (c.clone(), ClassScores::from_counts(tp, p, g)))
            .collect();
        let mean = |f: fn(&ClassScores) -> f64| {
            if classes.is_empty() {
                0.0
            } else {
                classes.values().map(f).sum::<f64>() / classes.len() as f64
            }
        };
        Self {
            macro_precision: mean(|s| s.precision),
            macro_recall: mean(|s| s.recall),
            macro_f1: mean(|s| s.f1),
            token_accuracy,
            classes,
        }
    }

    pub fn render_table(&self) -> String {
        let width = self
            .classes
            .keys()
            .map(|c| c.chars().count())
            .chain(["macro".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        )
        .unwrap();
        for (c, s) in &self.classes {
            writeln!(
                out,
                "{c:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                s.precision, s.recall, s.f1, s.support
            )
            .unwrap();
        }
        let support: usize = self.classes.values().map(|s| s.support).sum();
        writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1, support
        )
        .unwrap();
        writeln!(out, "token accuracy: {:.4}", self.token_accuracy).unwrap();
        out
    }

    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "macro_precision={}", self.macro_precision).unwrap();
        writeln!(out, "macro_recall={}", self.macro_recall).unwrap();
        writeln!(out, "macro_f1={}", self.macro_f1).unwrap();
        writeln!(out, "token_accuracy={}", self.token_accuracy).unwrap();
        for (c, s) in &self.classes {
            writeln!(out, "class.{c}.precision={}", s.precision).unwrap();
            writeln!(out, "class.{c}.recall={}", s.recall).unwrap();
            writeln!(out, "class.{c}.f1={}", s.f1).unwrap();
            writeln!(out, "class.{c}.support={}", s.support).unwrap();
        }
        out
    }
}

/// Scores predicted tag sequences against the gold tags of `gold`.
pub fn evaluate<S: AsRef<str>>(gold: &LabeledCorpus, predicted: &[Vec<S>]) -> Result<EvalReport> {
    check_alignment(gold, predicted.iter().map(Vec::len))?;
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let (mut correct, mut total) = (0usize, 0usize);
    for (sentence, pred) in gold.sentences.iter().zip(predicted) {
        let gold_tags = sentence.gold_tags();
        let gold_chunks = extract_chunks(&gold_tags)?;
        let pred_chunks = extract_chunks(pred)?;
        let gold_set: HashSet<&Chunk> = gold_chunks.iter().collect();
        for c in &gold_chunks {
            counts.entry(c.class.clone()).or_default().2 += 1;
        }
        for c in &pred_chunks {
            let entry = counts.entry(c.class.clone()).or_default();
            entry.1 += 1;
            if gold_set.contains(c) {
                entry.0 += 1;
            }
        }
        correct += gold_tags
            .iter()
            .zip(pred)
            .filter(|(g, p)| g.as_str() == p.as_ref())
            .count();
        total += gold_tags.len();
    }
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    Ok(EvalReport::from_counts(&counts, accuracy))
}

/// Signed differences `b - a` for one metric row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricDelta {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDelta {
    pub classes: BTreeMap<String, MetricDelta>,
    pub macro_scores: MetricDelta,
    pub token_accuracy: f64,
}

impl ReportDelta {
    pub fn render_table(&self) -> String {
        let width = self.classes.keys().map(|c| c.chars().count()).chain([5]).max().unwrap_or(5);
        let mut out = String::new();
        writeln!(out, "{:<width$}  {:>10}  {:>10}  {:>10}", "class", "Δprecision", "Δrecall", "Δf1").unwrap();
        let rows = self.classes.iter().map(|(c, d)| (c.as_str(), d)).chain([("macro", &self.macro_scores)]);
        for (c, d) in rows {
            writeln!(out, "{c:<width$}  {:>+10.4}  {:>+10.4}  {:>+10.4}", d.precision, d.recall, d.f1).unwrap();
        }
        writeln!(out, "Δtoken accuracy: {:+.4}", self.token_accuracy).unwrap();
        out
    }
}

/// Per-metric differences `b - a`. Both reports must cover the same classes.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<ReportDelta> {
    let ka: BTreeSet<&String> = a.classes.keys().collect();
    let kb: BTreeSet<&String> = b.classes.keys().collect();
    if ka != kb {
        return Err(Error::InvalidArgument(format!(
            "reports cover different classes: {ka:?} vs {kb:?}"
        )));
    }
    let delta = |x: &ClassScores, y: &ClassScores| MetricDelta {
        precision: y.precision - x.precision,
        recall: y.recall - x.recall,
        f1: y.f1 - x.f1,
    };
    Ok(ReportDelta {
        classes: a
            .classes
            .iter()
            .map(|(c, s)| (c.clone(), delta(s, &b.classes[c])))
            .collect(),
        macro_scores: MetricDelta {
            precision: b.macro_precision - a.macro_precision,
            recall: b.macro_recall - a.macro_recall,
            f1: b.macro_f1 - a.macro_f1,
        },
        token_accuracy: b.token_accuracy - a.token_accuracy,
    })
}
