use rand::Rng;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

/// `y = x·W + b` with `W: [input × output]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Self {
            name: name.into(),
            input,
            output,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init<R: Rng + ?Sized>(&self, ps: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.input as f64).sqrt();
        ps.insert(
            self.weight_name(),
            Matrix::uniform(self.input, self.output, bound, rng),
        );
        ps.insert(self.bias_name(), Matrix::uniform(1, self.output, bound, rng));
    }

    pub fn forward(&self, ps: &ParamStore, x: &Matrix) -> Result<Matrix> {
        linear_forward(x, ps.get(&self.weight_name())?, ps.get(&self.bias_name())?)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, ps: &mut ParamStore, x: &Matrix, d_out: &Matrix) -> Result<Matrix> {
        let d_w = x.t_matmul(d_out)?;
        ps.accumulate(&self.weight_name(), &d_w)?;
        ps.accumulate(&self.bias_name(), &d_out.column_sums())?;
        d_out.matmul_t(ps.get(&self.weight_name())?)
    }
}

pub fn linear_forward(x: &Matrix, weight: &Matrix, bias: &Matrix) -> Result<Matrix> {
    if bias.rows() != 1 || bias.cols() != weight.cols() {
        return Err(Error::Shape(format!(
            "bias {:?} for weight {:?}",
            bias.shape(),
            weight.shape()
        )));
    }
    let mut y = x.matmul(weight)?;
    y.add_row(bias.as_slice())?;
    Ok(y)
}
