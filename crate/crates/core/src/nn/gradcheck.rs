//! Central finite-difference gradient checking.

use super::ParamStore;
use crate::error::{Error, Result};

/// Perturbation used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub scalars: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index of the scalar with the largest relative error.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

/// Compares analytic gradients against central differences for every scalar
/// in `ps`.
///
/// `loss(ps, true)` must return the loss and accumulate analytic gradients
/// into `ps`; `loss(ps, false)` must return the loss only.
pub fn gradient_check<F>(ps: &mut ParamStore, mut loss: F, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    ps.zero_grads();
    let base = loss(ps, true)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss is {base}")));
    }
    let names: Vec<String> = ps.names().map(str::to_string).collect();
    let analytic: Vec<Vec<f64>> = names
        .iter()
        .map(|n| ps.grad(n).map(|g| g.as_slice().to_vec()))
        .collect::<Result<_>>()?;

    let mut params = Vec::with_capacity(names.len());
    for (name, grads) in names.iter().zip(&analytic) {
        let mut check = ParamCheck {
            name: name.clone(),
            scalars: grads.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_index: 0,
        };
        for (i, &a) in grads.iter().enumerate() {
            let original = ps.get(name)?.as_slice()[i];
            ps.value_mut(name)?.as_mut_slice()[i] = original + FD_STEP;
            let plus = loss(ps, false)?;
            ps.value_mut(name)?.as_mut_slice()[i] = original - FD_STEP;
            let minus = loss(ps, false)?;
            ps.value_mut(name)?.as_mut_slice()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing `{name}`[{i}]")));
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let rel = relative_error(a, numeric);
            check.max_abs_err = check.max_abs_err.max((a - numeric).abs());
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst_index = i;
            }
        }
        params.push(check);
    }
    ps.zero_grads();
    Ok(GradCheckReport { params, tolerance })
}
