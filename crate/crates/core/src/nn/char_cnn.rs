use rand::Rng;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

/// Word encoder over character embeddings: 1-D convolution, ReLU, max-pool.
///
/// The filter bank is stored as `[kernel·char_dim × filters]`, each column
/// being one filter over a flattened window of `kernel` rows.
#[derive(Debug, Clone)]
pub struct CharCnn {
    pub name: String,
    pub char_dim: usize,
    pub kernel: usize,
    pub filters: usize,
}

#[derive(Debug, Clone)]
pub struct CharCnnCache {
    input_rows: usize,
    padded: Matrix,
    /// Winning window per filter, `None` when the pooled value is zero
    /// because every window was clipped by the ReLU.
    argmax: Vec<Option<usize>>,
}

impl CharCnn {
    pub fn new(name: impl Into<String>, char_dim: usize, kernel: usize, filters: usize) -> Result<Self> {
        if kernel == 0 || filters == 0 || char_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "char-cnn needs positive kernel, filters and char_dim (got {kernel}, {filters}, {char_dim})"
            )));
        }
        Ok(Self {
            name: name.into(),
            char_dim,
            kernel,
            filters,
        })
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init<R: Rng + ?Sized>(&self, ps: &mut ParamStore, rng: &mut R) {
        let fan_in = self.kernel * self.char_dim;
        let bound = 1.0 / (fan_in as f64).sqrt();
        ps.insert(self.weight_name(), Matrix::uniform(fan_in, self.filters, bound, rng));
        ps.insert(self.bias_name(), Matrix::uniform(1, self.filters, bound, rng));
    }

    /// Number of convolution windows for a word of `chars` characters.
    pub fn windows(&self, chars: usize) -> usize {
        chars.max(self.kernel) - self.kernel + 1
    }

    /// Encodes one word `[m × char_dim]` into a `1 × filters` vector.
    pub fn forward(&self, ps: &ParamStore, chars: &Matrix) -> Result<(Matrix, CharCnnCache)> {
        if chars.rows() == 0 || chars.cols() != self.char_dim {
            return Err(Error::Shape(format!(
                "char-cnn input {:?}, expected [m≥1 × {}]",
                chars.shape(),
                self.char_dim
            )));
        }
        let weight = ps.get(&self.weight_name())?;
        let bias = ps.get(&self.bias_name())?;
        let rows = chars.rows().max(self.kernel);
        let mut padded = Matrix::zeros(rows, self.char_dim);
        padded.as_mut_slice()[..chars.len()].copy_from_slice(chars.as_slice());

        let windows = self.windows(chars.rows());
        let width = self.kernel * self.char_dim;
        let mut out = Matrix::zeros(1, self.filters);
        let mut argmax = vec![None; self.filters];
        for p in 0..windows {
            let window = &padded.as_slice()[p * self.char_dim..p * self.char_dim + width];
            for f in 0..self.filters {
                let mut z = bias[(0, f)];
                for (i, &x) in window.iter().enumerate() {
                    z += x * weight[(i, f)];
                }
                // ReLU then max; first maximal window wins ties.
                if z > out[(0, f)] {
                    out[(0, f)] = z;
                    argmax[f] = Some(p);
                }
            }
        }
        Ok((
            out,
            CharCnnCache {
                input_rows: chars.rows(),
                padded,
                argmax,
            },
        ))
    }

    /// Accumulates parameter gradients and returns `dL/dchars`.
    pub fn backward(&self, ps: &mut ParamStore, cache: &CharCnnCache, d_out: &Matrix) -> Result<Matrix> {
        if d_out.shape() != (1, self.filters) {
            return Err(Error::Shape("char-cnn backward".into()));
        }
        let width = self.kernel * self.char_dim;
        let mut d_weight = Matrix::zeros(width, self.filters);
        let mut d_bias = Matrix::zeros(1, self.filters);
        let mut d_padded = Matrix::zeros(cache.padded.rows(), self.char_dim);
        let weight = ps.get(&self.weight_name())?;
        for f in 0..self.filters {
            let Some(p) = cache.argmax[f] else { continue };
            let g = d_out[(0, f)];
            d_bias[(0, f)] += g;
            let base = p * self.char_dim;
            for i in 0..width {
                d_weight[(i, f)] += g * cache.padded.as_slice()[base + i];
                d_padded.as_mut_slice()[base + i] += g * weight[(i, f)];
            }
        }
        ps.accumulate(&self.weight_name(), &d_weight)?;
        ps.accumulate(&self.bias_name(), &d_bias)?;
        let keep = cache.input_rows * self.char_dim;
        Matrix::from_vec(
            cache.input_rows,
            self.char_dim,
            d_padded.as_slice()[..keep].to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_count() {
        let cnn = CharCnn::new("c", 2, 3, 4).unwrap();
        assert_eq!(cnn.windows(5), 3);
        assert_eq!(cnn.windows(2), 1);
        assert_eq!(cnn.windows(1), 1);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let cnn = CharCnn::new("c", 2, 3, 4).unwrap();
        let mut ps = ParamStore::new();
        ps.insert(cnn.weight_name(), Matrix::zeros(6, 4));
        ps.insert(cnn.bias_name(), Matrix::zeros(1, 4));
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let (y, _) = cnn.forward(&ps, &x).unwrap();
        assert_eq!(y.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(CharCnn::new("c", 2, 0, 4).is_err());
        assert!(CharCnn::new("c", 2, 3, 0).is_err());
    }

    #[test]
    fn picks_the_best_window() {
        // single filter summing a width-1 window over a 1-d input
        let cnn = CharCnn::new("c", 1, 1, 1).unwrap();
        let mut ps = ParamStore::new();
        ps.insert(cnn.weight_name(), Matrix::from_vec(1, 1, vec![1.0]).unwrap());
        ps.insert(cnn.bias_name(), Matrix::zeros(1, 1));
        let x = Matrix::from_vec(4, 1, vec![0.5, 2.0, 2.0, -1.0]).unwrap();
        let (y, cache) = cnn.forward(&ps, &x).unwrap();
        assert_eq!(y.as_slice(), &[2.0]);
        let dx = cnn.backward(&mut ps, &cache, &Matrix::row_vector(&[1.0])).unwrap();
        assert_eq!(dx.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
