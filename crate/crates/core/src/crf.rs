//! First-order linear-chain CRF.
//!
//! A path `y` over `n` positions scores
//! `start[y0] + Σ emit[t][yt] + Σ trans[y(t-1)][yt] + end[y(n-1)]`.
//! All routines work in log space and expect finite scores.

use serde::{Deserialize, Serialize};

use crate::corpus::{Bio, TagSet};
use crate::error::{Error, Result};
use crate::nn::matrix::log_sum_exp;
use crate::nn::Matrix;

/// Score added to transitions a BIO-constrained decoder forbids.
pub const FORBIDDEN: f64 = -1e4;

/// Tag-to-tag scores plus start and end scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// `scores[(i, j)]` scores tag `i` followed by tag `j`.
    pub scores: Matrix,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl TransitionMatrix {
    pub fn zeros(tags: usize) -> Self {
        Self {
            scores: Matrix::zeros(tags, tags),
            start: vec![0.0; tags],
            end: vec![0.0; tags],
        }
    }

    pub fn new(scores: Matrix, start: Vec<f64>, end: Vec<f64>) -> Result<Self> {
        let t = scores.rows();
        if scores.cols() != t || start.len() != t || end.len() != t {
            return Err(Error::Shape(format!(
                "transitions {:?} with {} start and {} end scores",
                scores.shape(),
                start.len(),
                end.len()
            )));
        }
        Ok(Self { scores, start, end })
    }

    pub fn tags(&self) -> usize {
        self.scores.rows()
    }

    /// Penalties forbidding `O → I-X`, `B-X/I-X → I-Y` (Y ≠ X) and starting on `I-X`.
    pub fn bio_constraints(tagset: &TagSet) -> Self {
        let t = tagset.len();
        let mut m = Self::zeros(t);
        let parsed: Vec<Bio> = tagset
            .labels()
            .iter()
            .map(|l| Bio::parse(l).expect("tagset labels are valid"))
            .collect();
        for (j, to) in parsed.iter().enumerate() {
            if let Bio::Inside(class) = to {
                m.start[j] = FORBIDDEN;
                for (i, from) in parsed.iter().enumerate() {
                    if from.class() != Some(class) {
                        m.scores[(i, j)] = FORBIDDEN;
                    }
                }
            }
        }
        m
    }

    /// Elementwise sum, used to overlay constraint penalties.
    pub fn plus(&self, other: &TransitionMatrix) -> Result<TransitionMatrix> {
        let mut out = self.clone();
        out.scores.add_assign(&other.scores)?;
        if other.tags() != self.tags() {
            return Err(Error::Shape("transition overlay".into()));
        }
        for i in 0..self.tags() {
            out.start[i] += other.start[i];
            out.end[i] += other.end[i];
        }
        Ok(out)
    }
}

fn check_shapes(emissions: &Matrix, trans: &TransitionMatrix) -> Result<()> {
    if emissions.rows() == 0 || emissions.cols() == 0 {
        return Err(Error::Shape("emissions need at least one position and one tag".into()));
    }
    if emissions.cols() != trans.tags() {
        return Err(Error::Shape(format!(
            "{} emission columns for {} transition tags",
            emissions.cols(),
            trans.tags()
        )));
    }
    Ok(())
}

/// Unnormalized score of one tag path.
pub fn path_score(emissions: &Matrix, trans: &TransitionMatrix, path: &[usize]) -> Result<f64> {
    check_shapes(emissions, trans)?;
    check_path(emissions, path)?;
    let mut score = trans.start[path[0]] + trans.end[path[path.len() - 1]];
    for (t, &y) in path.iter().enumerate() {
        score += emissions[(t, y)];
        if t > 0 {
            score += trans.scores[(path[t - 1], y)];
        }
    }
    Ok(score)
}

fn check_path(emissions: &Matrix, path: &[usize]) -> Result<()> {
    if path.len() != emissions.rows() {
        return Err(Error::Alignment(format!(
            "path of length {} for {} positions",
            path.len(),
            emissions.rows()
        )));
    }
    if let Some(&bad) = path.iter().find(|&&y| y >= emissions.cols()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: emissions.cols(),
        });
    }
    Ok(())
}

/// Forward log-scores: `alpha[(t, j)]` is the log-sum over prefixes ending in `j` at `t`.
fn forward_scores(emissions: &Matrix, trans: &TransitionMatrix) -> Matrix {
    let (n, tags) = emissions.shape();
    let mut alpha = Matrix::zeros(n, tags);
    for j in 0..tags {
        alpha[(0, j)] = trans.start[j] + emissions[(0, j)];
    }
    let mut buf = vec![0.0; tags];
    for t in 1..n {
        for j in 0..tags {
            for i in 0..tags {
                buf[i] = alpha[(t - 1, i)] + trans.scores[(i, j)];
            }
            alpha[(t, j)] = log_sum_exp(&buf) + emissions[(t, j)];
        }
    }
    alpha
}

/// Backward log-scores: `beta[(t, i)]` is the log-sum over suffixes after `i` at `t`, end included.
fn backward_scores(emissions: &Matrix, trans: &TransitionMatrix) -> Matrix {
    let (n, tags) = emissions.shape();
    let mut beta = Matrix::zeros(n, tags);
    beta.row_mut(n - 1).copy_from_slice(&trans.end);
    let mut buf = vec![0.0; tags];
    for t in (0..n - 1).rev() {
        for i in 0..tags {
            for j in 0..tags {
                buf[j] = trans.scores[(i, j)] + emissions[(t + 1, j)] + beta[(t + 1, j)];
            }
            beta[(t, i)] = log_sum_exp(&buf);
        }
    }
    beta
}

fn final_lse(alpha: &Matrix, trans: &TransitionMatrix) -> f64 {
    let last = alpha.rows() - 1;
    let finals: Vec<f64> = (0..trans.tags())
        .map(|j| alpha[(last, j)] + trans.end[j])
        .collect();
    log_sum_exp(&finals)
}

/// `log Σ_paths exp(score)` via the forward recursion.
pub fn log_partition(emissions: &Matrix, trans: &TransitionMatrix) -> Result<f64> {
    check_shapes(emissions, trans)?;
    Ok(final_lse(&forward_scores(emissions, trans), trans))
}

/// Highest-scoring path and its score. Ties go to the lower tag index.
pub fn viterbi(emissions: &Matrix, trans: &TransitionMatrix) -> Result<(Vec<usize>, f64)> {
    check_shapes(emissions, trans)?;
    let (n, tags) = emissions.shape();
    let mut best: Vec<f64> = (0..tags)
        .map(|j| trans.start[j] + emissions[(0, j)])
        .collect();
    let mut back = vec![vec![0usize; tags]; n];
    for t in 1..n {
        let mut next = vec![0.0; tags];
        for j in 0..tags {
            let mut arg = 0;
            let mut max = best[0] + trans.scores[(0, j)];
            for i in 1..tags {
                let s = best[i] + trans.scores[(i, j)];
                if s > max {
                    max = s;
                    arg = i;
                }
            }
            next[j] = max + emissions[(t, j)];
            back[t][j] = arg;
        }
        best = next;
    }
    let mut last = 0;
    let mut score = best[0] + trans.end[0];
    for j in 1..tags {
        let s = best[j] + trans.end[j];
        if s > score {
            score = s;
            last = j;
        }
    }
    let mut path = vec![last; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, score))
}

/// Per-position tag marginals via forward-backward; rows sum to one.
pub fn crf_marginals(emissions: &Matrix, trans: &TransitionMatrix) -> Result<Matrix> {
    check_shapes(emissions, trans)?;
    let alpha = forward_scores(emissions, trans);
    let beta = backward_scores(emissions, trans);
    let log_z = final_lse(&alpha, trans);
    let mut out = Matrix::zeros(emissions.rows(), emissions.cols());
    for t in 0..emissions.rows() {
        for j in 0..emissions.cols() {
            out[(t, j)] = (alpha[(t, j)] + beta[(t, j)] - log_z).exp();
        }
    }
    Ok(out)
}

/// Negative log-likelihood of a gold path and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    pub loss: f64,
    pub d_emissions: Matrix,
    pub d_transitions: TransitionMatrix,
}

/// `loss = log Z - score(gold)`; gradients are expected minus observed
/// counts (marginals for emissions, pair marginals for transitions).
pub fn crf_nll_grad(emissions: &Matrix, trans: &TransitionMatrix, gold: &[usize]) -> Result<CrfGradient> {
    check_shapes(emissions, trans)?;
    check_path(emissions, gold)?;
    let (n, tags) = emissions.shape();
    let alpha = forward_scores(emissions, trans);
    let beta = backward_scores(emissions, trans);
    let log_z = final_lse(&alpha, trans);
    let gold_score = path_score(emissions, trans, gold)?;

    let mut d_emissions = Matrix::zeros(n, tags);
    for t in 0..n {
        for j in 0..tags {
            d_emissions[(t, j)] = (alpha[(t, j)] + beta[(t, j)] - log_z).exp();
        }
        d_emissions[(t, gold[t])] -= 1.0;
    }

    let mut d_trans = TransitionMatrix::zeros(tags);
    for j in 0..tags {
        d_trans.start[j] = d_emissions[(0, j)];
        d_trans.end[j] = d_emissions[(n - 1, j)];
    }
    // The position-0 and position-(n-1) rows already hold marginal minus one-hot.
    for t in 0..n - 1 {
        for i in 0..tags {
            for j in 0..tags {
                let log_p = alpha[(t, i)] + trans.scores[(i, j)] + emissions[(t + 1, j)] + beta[(t + 1, j)] - log_z;
                d_trans.scores[(i, j)] += log_p.exp();
            }
        }
        d_trans.scores[(gold[t], gold[t + 1])] -= 1.0;
    }

    Ok(CrfGradient {
        loss: (log_z - gold_score).max(0.0),
        d_emissions,
        d_transitions: d_trans,
    })
}
