use rand::Rng;

use super::matrix::softmax_in_place;
use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

/// Multi-head scaled dot-product self-attention without masking.
///
/// Parameters: `wq, wk, wv, wo` (`[d × d]`) and `bq, bk, bv, bo` (`[1 × d]`).
/// Head `h` uses columns `h·d/H .. (h+1)·d/H` of the projected queries, keys
/// and values; head outputs are concatenated and passed through `wo`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Attention weights per head, `[n × n]`.
    weights: Vec<Matrix>,
    concat: Matrix,
}

impl AttentionCache {
    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }
}

const PROJECTIONS: [&str; 4] = ["q", "k", "v", "o"];

impl MultiHeadAttention {
    pub fn new(name: impl Into<String>, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim == 0 || dim % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "attention dimension {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            heads,
        })
    }

    pub fn weight_name(&self, proj: &str) -> String {
        format!("{}.w{proj}", self.name)
    }

    pub fn bias_name(&self, proj: &str) -> String {
        format!("{}.b{proj}", self.name)
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn init<R: Rng + ?Sized>(&self, ps: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.dim as f64).sqrt();
        for p in PROJECTIONS {
            ps.insert(self.weight_name(p), Matrix::uniform(self.dim, self.dim, bound, rng));
            ps.insert(self.bias_name(p), Matrix::uniform(1, self.dim, bound, rng));
        }
    }

    fn project(&self, ps: &ParamStore, x: &Matrix, proj: &str) -> Result<Matrix> {
        super::linear::linear_forward(x, ps.get(&self.weight_name(proj))?, ps.get(&self.bias_name(proj))?)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Matrix) -> Result<(Matrix, AttentionCache)> {
        if x.cols() != self.dim {
            return Err(Error::Shape(format!(
                "attention expects {} features, got {}",
                self.dim,
                x.cols()
            )));
        }
        let q = self.project(ps, x, "q")?;
        let k = self.project(ps, x, "k")?;
        let v = self.project(ps, x, "v")?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Matrix::zeros(x.rows(), self.dim);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = (q.columns(h * dh, dh), k.columns(h * dh, dh), v.columns(h * dh, dh));
            let mut a = qh.matmul_t(&kh)?;
            a.scale(scale);
            for r in 0..a.rows() {
                softmax_in_place(a.row_mut(r));
            }
            concat.set_columns(h * dh, &a.matmul(&vh)?);
            weights.push(a);
        }
        let y = self.project(ps, &concat, "o")?;
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                weights,
                concat,
            },
        ))
    }

    pub fn backward(&self, ps: &mut ParamStore, cache: &AttentionCache, d_out: &Matrix) -> Result<Matrix> {
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let n = cache.x.rows();

        ps.accumulate(&self.weight_name("o"), &cache.concat.t_matmul(d_out)?)?;
        ps.accumulate(&self.bias_name("o"), &d_out.column_sums())?;
        let d_concat = d_out.matmul_t(ps.get(&self.weight_name("o"))?)?;

        let mut dq = Matrix::zeros(n, self.dim);
        let mut dk = Matrix::zeros(n, self.dim);
        let mut dv = Matrix::zeros(n, self.dim);
        for h in 0..self.heads {
            let a = &cache.weights[h];
            let d_head = d_concat.columns(h * dh, dh);
            let (qh, kh, vh) = (
                cache.q.columns(h * dh, dh),
                cache.k.columns(h * dh, dh),
                cache.v.columns(h * dh, dh),
            );
            dv.set_columns(h * dh, &a.t_matmul(&d_head)?);
            let da = d_head.matmul_t(&vh)?;
            // softmax Jacobian, row by row
            let mut ds = Matrix::zeros(n, n);
            for r in 0..n {
                let inner: f64 = a.row(r).iter().zip(da.row(r)).map(|(p, g)| p * g).sum();
                for c in 0..n {
                    ds[(r, c)] = a[(r, c)] * (da[(r, c)] - inner) * scale;
                }
            }
            dq.set_columns(h * dh, &ds.matmul(&kh)?);
            dk.set_columns(h * dh, &ds.t_matmul(&qh)?);
        }

        let mut dx = Matrix::zeros(n, self.dim);
        for (proj, d) in [("q", &dq), ("k", &dk), ("v", &dv)] {
            ps.accumulate(&self.weight_name(proj), &cache.x.t_matmul(d)?)?;
            ps.accumulate(&self.bias_name(proj), &d.column_sums())?;
            dx.add_assign(&d.matmul_t(ps.get(&self.weight_name(proj))?)?)?;
        }
        Ok(dx)
    }
}
