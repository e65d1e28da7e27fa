use std::collections::HashMap;

use crate::error::{Error, Result};

/// Pretrained non-contextual word vectors.
///
/// Text format: one token per line followed by its components; an optional
/// first line `count dim` is detected and skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector of {} components in a {}-dimensional table",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut table: Option<WordVectors> = None;
        let mut declared: Option<(usize, usize)> = None;
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 {
                if let (Ok(count), Ok(dim)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                    declared = Some((count, dim));
                    table = Some(WordVectors::new(dim));
                    continue;
                }
            }
            let values = fields[1..]
                .iter()
                .map(|v| v.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| err(i + 1, "components must be finite decimals".into()))?;
            if values.is_empty() {
                return Err(err(i + 1, "token has no components".into()));
            }
            let table = table.get_or_insert_with(|| WordVectors::new(values.len()));
            table
                .insert(fields[0], values)
                .map_err(|e| err(i + 1, e.to_string()))?;
        }
        let table = table.ok_or_else(|| err(1, "no vectors found".into()))?;
        if let Some((count, _)) = declared {
            if count != table.len() {
                return Err(err(1, format!("header declares {count} vectors, found {}", table.len())));
            }
        }
        Ok(table)
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

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}
