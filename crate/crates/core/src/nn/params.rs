use std::collections::BTreeMap;

use super::Matrix;
use crate::error::{Error, Result};

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub(crate) first_moment: Matrix,
    pub(crate) second_moment: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
        }
    }
}

/// Named parameters in a stable (sorted) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter, replacing any previous one of the same name.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.param(name).map(|p| &p.value)
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.param_mut(name).map(|p| &mut p.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix> {
        self.param(name).map(|p| &p.grad)
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.param_mut(name).map(|p| &mut p.grad)
    }

    /// Adds `delta` into the gradient of `name`.
    pub fn accumulate(&mut self, name: &str, delta: &Matrix) -> Result<()> {
        self.grad_mut(name)?.add_assign(delta)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in self.params.values_mut() {
            p.grad.scale(factor);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Parameter values only, for serialization.
    pub fn values(&self) -> BTreeMap<String, Matrix> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), v.value.clone()))
            .collect()
    }

    pub fn from_values(values: BTreeMap<String, Matrix>) -> Self {
        Self {
            params: values
                .into_iter()
                .map(|(k, v)| (k, Param::new(v)))
                .collect(),
        }
    }

    /// Replaces parameter values, keeping optimizer state.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, p) in &mut self.params {
            let src = other.get(name)?;
            if src.shape() != p.value.shape() {
                return Err(Error::Shape(format!("parameter `{name}`")));
            }
            p.value = src.clone();
        }
        Ok(())
    }
}
