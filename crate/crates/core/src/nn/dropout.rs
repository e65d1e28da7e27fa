use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element scale factors applied by a dropout forward pass; `None` means identity.
#[derive(Debug, Clone, Default)]
pub struct DropoutMask {
    scales: Option<Vec<f64>>,
}

impl DropoutMask {
    pub fn backward(&self, d_out: &Matrix) -> Matrix {
        match &self.scales {
            None => d_out.clone(),
            Some(s) => {
                let mut d = d_out.clone();
                d.as_mut_slice().iter_mut().zip(s).for_each(|(g, k)| *g *= k);
                d
            }
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted dropout: in training, zeroes each element with probability
/// `rate` and scales survivors by `1/(1-rate)`. Evaluation is the identity.
pub fn dropout<R: Rng + ?Sized>(x: &Matrix, rate: f64, mode: Mode, rng: &mut R) -> Result<(Matrix, DropoutMask)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::default()));
    }
    let keep = 1.0 / (1.0 - rate);
    let scales: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    y.as_mut_slice().iter_mut().zip(&scales).for_each(|(v, k)| *v *= k);
    Ok((y, DropoutMask { scales: Some(scales) }))
}

/// [`dropout`] with a fresh generator seeded from `seed`.
pub fn dropout_apply(x: &Matrix, rate: f64, mode: Mode, seed: u64) -> Result<Matrix> {
    dropout(x, rate, mode, &mut ChaCha8Rng::seed_from_u64(seed)).map(|(y, _)| y)
}
