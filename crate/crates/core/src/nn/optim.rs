use super::ParamStore;
use crate::error::{Error, Result};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        Ok(Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        })
    }

    /// Applies update number `step` (1-based) and zeroes all gradients.
    pub fn step(&self, ps: &mut ParamStore, step: u64) -> Result<()> {
        if step == 0 {
            return Err(Error::InvalidArgument("adam steps are 1-based".into()));
        }
        let c1 = 1.0 - self.beta1.powi(step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(step.min(i32::MAX as u64) as i32);
        for (_, p) in ps.iter_mut() {
            let value = p.value.as_mut_slice();
            let grad = p.grad.as_mut_slice();
            let m = p.first_moment.as_mut_slice();
            let v = p.second_moment.as_mut_slice();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
                value[i] -= self.learning_rate * (update + self.weight_decay * value[i]);
                grad[i] = 0.0;
            }
        }
        Ok(())
    }
}
