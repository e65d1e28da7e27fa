use std::collections::HashMap;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Precomputed per-token feature vectors keyed by `(sentence id, token index)`.
///
/// File lines: `sentence_id<TAB>token_index<TAB>v1 v2 ... vd`. The values may
/// be separated by spaces or tabs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextualVectors {
    dim: usize,
    vectors: HashMap<(String, usize), Vec<f64>>,
}

impl ContextualVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, sentence_id: impl Into<String>, token: usize, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "contextual vector has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("contextual vector".into()));
        }
        self.vectors.insert((sentence_id.into(), token), vector);
        Ok(())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut out: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                message,
            };
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(idx), Some(values)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected `sentence_id<TAB>token_index<TAB>values`".into()));
            };
            let idx: usize = idx.trim().parse().map_err(|_| err(format!("bad token index `{idx}`")))?;
            let values = values
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            if values.is_empty() {
                return Err(err("no values".into()));
            }
            let store = out.get_or_insert_with(|| Self::new(values.len()));
            store.insert(id, idx, values).map_err(|e| err(e.to_string()))?;
        }
        out.ok_or_else(|| Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            message: "no contextual vectors".into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, sentence_id: &str, token: usize) -> Option<&[f64]> {
        self.vectors.get(&(sentence_id.to_string(), token)).map(Vec::as_slice)
    }

    /// `[n × dim]` features for a sentence; any missing token is an error.
    pub fn matrix_for(&self, sentence: &Sentence) -> Result<Matrix> {
        let mut m = Matrix::zeros(sentence.len(), self.dim);
        for t in 0..sentence.len() {
            let v = self.get(&sentence.id, t).ok_or_else(|| Error::MissingContextual {
                sentence_id: sentence.id.clone(),
                token: Some(t),
            })?;
            m.row_mut(t).copy_from_slice(v);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    #[test]
    fn parse_and_lookup() {
        let c = ContextualVectors::parse("s1\t0\t0.5 1\ns1\t1\t-1\t2\n", "ctx").unwrap();
        assert_eq!((c.dim(), c.len()), (2, 2));
        let s = Sentence::new("s1", vec![Token::new("a", "O"), Token::new("b", "O")]);
        assert_eq!(c.matrix_for(&s).unwrap().as_slice(), &[0.5, 1.0, -1.0, 2.0]);
        let missing = Sentence::new("s2", vec![Token::new("a", "O")]);
        match c.matrix_for(&missing) {
            Err(Error::MissingContextual { sentence_id, .. }) => assert_eq!(sentence_id, "s2"),
            other => panic!("{other:?}"),
        }
        assert!(ContextualVectors::parse("s1\t0\t1 2\ns1\t1\t1\n", "ctx").is_err());
        assert!(ContextualVectors::parse("", "ctx").is_err());
    }
}
