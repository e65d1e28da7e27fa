use rand::Rng;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

/// Lookup table `[vocab × dim]`; row 0 is reserved for unknown items.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub name: String,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(name: impl Into<String>, vocab: usize, dim: usize) -> Self {
        Self {
            name: name.into(),
            vocab,
            dim,
        }
    }

    pub fn table_name(&self) -> String {
        format!("{}.table", self.name)
    }

    pub fn init<R: Rng + ?Sized>(&self, ps: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.dim as f64).sqrt();
        ps.insert(
            self.table_name(),
            Matrix::uniform(self.vocab, self.dim, bound, rng),
        );
    }

    pub fn forward(&self, ps: &ParamStore, indices: &[usize]) -> Result<Matrix> {
        embed_lookup(ps.get(&self.table_name())?, indices)
    }

    pub fn backward(&self, ps: &mut ParamStore, indices: &[usize], d_out: &Matrix) -> Result<()> {
        let grad = ps.grad_mut(&self.table_name())?;
        embed_backward(grad, indices, d_out)
    }
}

/// Row `i` of the output is `table[indices[i]]`.
pub fn embed_lookup(table: &Matrix, indices: &[usize]) -> Result<Matrix> {
    let mut out = Matrix::zeros(indices.len(), table.cols());
    for (i, &idx) in indices.iter().enumerate() {
        if idx >= table.rows() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: table.rows(),
            });
        }
        out.row_mut(i).copy_from_slice(table.row(idx));
    }
    Ok(out)
}

/// Scatters output gradients back into the selected rows.
pub fn embed_backward(table_grad: &mut Matrix, indices: &[usize], d_out: &Matrix) -> Result<()> {
    if d_out.rows() != indices.len() || d_out.cols() != table_grad.cols() {
        return Err(Error::Shape("embedding backward".into()));
    }
    for (i, &idx) in indices.iter().enumerate() {
        if idx >= table_grad.rows() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: table_grad.rows(),
            });
        }
        table_grad
            .row_mut(idx)
            .iter_mut()
            .zip(d_out.row(i))
            .for_each(|(g, d)| *g += d);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_selects_rows() {
        let out = embed_lookup(&Matrix::identity(3), &[2, 0]).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_index() {
        let e = embed_lookup(&Matrix::identity(3), &[5]).unwrap_err();
        assert!(matches!(e, Error::IndexOutOfRange { index: 5, len: 3 }));
    }

    #[test]
    fn repeated_indices_accumulate() {
        let mut g = Matrix::zeros(3, 2);
        let d = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        embed_backward(&mut g, &[1, 1], &d).unwrap();
        assert_eq!(g.row(1), &[4.0, 6.0]);
        assert_eq!(g.row(0), &[0.0, 0.0]);
    }
}
