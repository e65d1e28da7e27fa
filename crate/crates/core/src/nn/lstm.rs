use rand::Rng;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM direction. Gate blocks in the fused `4h` axis are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
struct Step {
    position: usize,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i | f | g | o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCellCache {
    steps: Vec<Step>,
}

impl LstmCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            name: name.into(),
            input,
            hidden,
        }
    }

    fn names(&self) -> [String; 3] {
        [
            format!("{}.w_x", self.name),
            format!("{}.w_h", self.name),
            format!("{}.bias", self.name),
        ]
    }

    pub fn init<R: Rng + ?Sized>(&self, ps: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        let [w_x, w_h, b] = self.names();
        let g = 4 * self.hidden;
        ps.insert(w_x, Matrix::uniform(self.input, g, bound, rng));
        ps.insert(w_h, Matrix::uniform(self.hidden, g, bound, rng));
        ps.insert(b, Matrix::uniform(1, g, bound, rng));
    }

    /// Runs over the rows of `x`, right-to-left when `reverse`. Row `t` of
    /// the output is the hidden state after consuming position `t`.
    pub fn forward(&self, ps: &ParamStore, x: &Matrix, reverse: bool) -> Result<(Matrix, LstmCellCache)> {
        if x.cols() != self.input {
            return Err(Error::Shape(format!(
                "lstm `{}` expects {} input features, got {}",
                self.name,
                self.input,
                x.cols()
            )));
        }
        let [w_x, w_h, b] = self.names();
        let (w_x, w_h, b) = (ps.get(&w_x)?, ps.get(&w_h)?, ps.get(&b)?);
        let h = self.hidden;
        let n = x.rows();
        let mut out = Matrix::zeros(n, h);
        let mut steps = Vec::with_capacity(n);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let xt = x.row(t);
            let mut z = b.as_slice().to_vec();
            for (k, &xv) in xt.iter().enumerate() {
                if xv != 0.0 {
                    z.iter_mut().zip(w_x.row(k)).for_each(|(z, w)| *z += xv * w);
                }
            }
            for (k, &hv) in h_prev.iter().enumerate() {
                if hv != 0.0 {
                    z.iter_mut().zip(w_h.row(k)).for_each(|(z, w)| *z += hv * w);
                }
            }
            let mut gates = z;
            for j in 0..h {
                gates[j] = sigmoid(gates[j]);
                gates[h + j] = sigmoid(gates[h + j]);
                gates[2 * h + j] = gates[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(gates[3 * h + j]);
            }
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                c[j] = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
                tanh_c[j] = c[j].tanh();
                h_new[j] = gates[3 * h + j] * tanh_c[j];
            }
            out.row_mut(t).copy_from_slice(&h_new);
            steps.push(Step {
                position: t,
                x: xt.to_vec(),
                h_prev: std::mem::replace(&mut h_prev, h_new),
                c_prev: std::mem::replace(&mut c_prev, c),
                gates,
                tanh_c,
            });
        }
        Ok((out, LstmCellCache { steps }))
    }

    /// Backpropagation through time. `d_out` is `dL/dh` per position.
    pub fn backward(&self, ps: &mut ParamStore, cache: &LstmCellCache, d_out: &Matrix) -> Result<Matrix> {
        let h = self.hidden;
        let [n_wx, n_wh, n_b] = self.names();
        let mut d_wx = Matrix::zeros(self.input, 4 * h);
        let mut d_wh = Matrix::zeros(h, 4 * h);
        let mut d_b = Matrix::zeros(1, 4 * h);
        let mut d_x = Matrix::zeros(d_out.rows(), self.input);
        {
            let w_x = ps.get(&n_wx)?;
            let w_h = ps.get(&n_wh)?;
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut dz = vec![0.0; 4 * h];
            for step in cache.steps.iter().rev() {
                let g = &step.gates;
                let d_row = d_out.row(step.position);
                for j in 0..h {
                    let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let dh = d_row[j] + dh_next[j];
                    let tc = step.tanh_c[j];
                    let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                    dz[j] = dc * c_g * i_g * (1.0 - i_g);
                    dz[h + j] = dc * step.c_prev[j] * f_g * (1.0 - f_g);
                    dz[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                    dz[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
                    dc_next[j] = dc * f_g;
                }
                for (k, &xv) in step.x.iter().enumerate() {
                    if xv != 0.0 {
                        d_wx.row_mut(k).iter_mut().zip(&dz).for_each(|(w, d)| *w += xv * d);
                    }
                    d_x[(step.position, k)] = super::matrix::dot(w_x.row(k), &dz);
                }
                for (k, &hv) in step.h_prev.iter().enumerate() {
                    if hv != 0.0 {
                        d_wh.row_mut(k).iter_mut().zip(&dz).for_each(|(w, d)| *w += hv * d);
                    }
                    dh_next[k] = super::matrix::dot(w_h.row(k), &dz);
                }
                d_b.as_mut_slice().iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
            }
        }
        ps.accumulate(&n_wx, &d_wx)?;
        ps.accumulate(&n_wh, &d_wh)?;
        ps.accumulate(&n_b, &d_b)?;
        Ok(d_x)
    }
}

/// Stack of bidirectional LSTM layers; each layer outputs `[n × 2·hidden]`,
/// left-to-right states first.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
    layers: Vec<(LstmCell, LstmCell)>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    layers: Vec<(LstmCellCache, LstmCellCache)>,
}

impl BiLstm {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize, layers: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "bilstm needs positive input, hidden and layer count (got {input}, {hidden}, {layers})"
            )));
        }
        let name = name.into();
        let layers = (0..layers)
            .map(|l| {
                let d_in = if l == 0 { input } else { 2 * hidden };
                (
                    LstmCell::new(format!("{name}.l{l}.fw"), d_in, hidden),
                    LstmCell::new(format!("{name}.l{l}.bw"), d_in, hidden),
                )
            })
            .collect();
        Ok(Self {
            name,
            input,
            hidden,
            layers,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn init<R: Rng + ?Sized>(&self, ps: &mut ParamStore, rng: &mut R) {
        for (fw, bw) in &self.layers {
            fw.init(ps, rng);
            bw.init(ps, rng);
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Matrix) -> Result<(Matrix, BiLstmCache)> {
        if x.rows() == 0 {
            return Err(Error::Shape("bilstm input has no positions".into()));
        }
        let mut current = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (fw, bw) in &self.layers {
            let (h_fw, c_fw) = fw.forward(ps, &current, false)?;
            let (h_bw, c_bw) = bw.forward(ps, &current, true)?;
            current = Matrix::hconcat(&[&h_fw, &h_bw])?;
            caches.push((c_fw, c_bw));
        }
        Ok((current, BiLstmCache { layers: caches }))
    }

    pub fn backward(&self, ps: &mut ParamStore, cache: &BiLstmCache, d_out: &Matrix) -> Result<Matrix> {
        let h = self.hidden;
        let mut d = d_out.clone();
        for ((fw, bw), (c_fw, c_bw)) in self.layers.iter().zip(&cache.layers).rev() {
            let mut dx = fw.backward(ps, c_fw, &d.columns(0, h))?;
            dx.add_assign(&bw.backward(ps, c_bw, &d.columns(h, h))?)?;
            d = dx;
        }
        Ok(d)
    }
}
