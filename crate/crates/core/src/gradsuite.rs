//! Finite-difference checks of every layer on small random instances.
//!
//! Each instance registers its input as a parameter and uses the loss
//! `Σ R ⊙ output` for a fixed random `R`, so the checker sees gradients with
//! respect to inputs as well as weights. The CRF instance uses its negative
//! log-likelihood directly.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crf::{crf_nll_grad, TransitionMatrix};
use crate::error::Result;
use crate::nn::matrix::dot;
use crate::nn::{gradient_check, BiLstm, CharCnn, Embedding, GradCheckReport, Linear, Matrix, MultiHeadAttention, ParamStore};
use crate::tagger::TaggerConfig;

/// Factor applied to analytic gradients when a fault is injected.
pub const FAULT_SCALE: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Embedding,
    CharCnn,
    BiLstm,
    Attention,
    Linear,
    Crf,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Embedding,
        Component::CharCnn,
        Component::BiLstm,
        Component::Attention,
        Component::Linear,
        Component::Crf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Embedding => "embedding",
            Component::CharCnn => "char-cnn",
            Component::BiLstm => "bilstm",
            Component::Attention => "mha",
            Component::Linear => "linear",
            Component::Crf => "crf",
        }
    }

    /// Relative-error bound; tighter for the components that are linear in
    /// their parameters or evaluated in closed form.
    pub fn tolerance(self) -> f64 {
        match self {
            Component::Linear | Component::Crf => 1e-6,
            _ => 1e-4,
        }
    }

    /// Smallest nonzero gradient magnitude an instance may contain.
    pub fn resolution(self) -> f64 {
        NOISE_FLOOR / self.tolerance()
    }

    /// Components used by a tagger built from `config`.
    pub fn enabled_by(config: &TaggerConfig) -> Vec<Component> {
        let mut out = vec![Component::Embedding];
        if config.use_char_cnn {
            out.push(Component::CharCnn);
        }
        out.push(Component::BiLstm);
        if config.use_mha {
            out.push(Component::Attention);
        }
        out.push(Component::Linear);
        if config.use_crf {
            out.push(Component::Crf);
        }
        out
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCheck {
    pub component: Component,
    pub seed: u64,
    pub report: GradCheckReport,
    /// Parameters whose gradient is zero by construction (such as the key
    /// bias under softmax shift invariance), with the largest absolute
    /// analytic and numeric values seen. These are judged on an absolute
    /// bound because their relative error is pure rounding noise.
    pub structural_zeros: Vec<(String, f64)>,
    /// Instances redrawn because some gradient was too small to resolve.
    pub redraws: usize,
}

/// Absolute bound for structurally-zero gradients.
pub const ZERO_GRADIENT_BOUND: f64 = 1e-10;

/// Rounding noise of a central difference with step `1e-5` on an `O(1)`
/// loss is about `1e-11`; a gradient must exceed this floor divided by the
/// tolerance for its relative error to be meaningful.
const NOISE_FLOOR: f64 = 1e-10;

const MAX_DRAWS: usize = 16;

impl ComponentCheck {
    pub fn passed(&self) -> bool {
        self.report.passed() && self.structural_zeros.iter().all(|(_, v)| *v <= ZERO_GRADIENT_BOUND)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.report.max_rel_err()
    }
}

const INPUT: &str = "input";

type LossFn = Box<dyn FnMut(&mut ParamStore, bool) -> Result<f64>>;

fn input(ps: &ParamStore) -> Result<Matrix> {
    ps.get(INPUT).cloned()
}

fn weighted(out: &Matrix, r: &Matrix) -> f64 {
    dot(out.as_slice(), r.as_slice())
}

/// Draws one random instance: parameters (input included) and its loss.
fn instance(component: Component, rng: &mut ChaCha8Rng) -> Result<(ParamStore, LossFn, Vec<String>)> {
    let mut ps = ParamStore::new();
    let mut zeros = Vec::new();
    let loss: LossFn = match component {
        Component::Embedding => {
            let emb = Embedding::new("emb", 5, 3);
            emb.init(&mut ps, rng);
            let idx: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
            let r = Matrix::uniform(idx.len(), 3, 1.0, rng);
            Box::new(move |ps, backward| {
                let out = emb.forward(ps, &idx)?;
                if backward {
                    emb.backward(ps, &idx, &r)?;
                }
                Ok(weighted(&out, &r))
            })
        }
        Component::CharCnn => {
            let kernel = rng.random_range(1..=3);
            let cnn = CharCnn::new("cnn", 3, kernel, 4)?;
            cnn.init(&mut ps, rng);
            let m = rng.random_range(1..=5);
            ps.insert(INPUT, Matrix::uniform(m, 3, 1.0, rng));
            let r = Matrix::uniform(1, 4, 1.0, rng);
            Box::new(move |ps, backward| {
                let (out, cache) = cnn.forward(ps, &input(ps)?)?;
                if backward {
                    let dx = cnn.backward(ps, &cache, &r)?;
                    ps.accumulate(INPUT, &dx)?;
                }
                Ok(weighted(&out, &r))
            })
        }
        Component::BiLstm => {
            let lstm = BiLstm::new("lstm", 3, 3, 2)?;
            lstm.init(&mut ps, rng);
            let n = rng.random_range(1..=4);
            ps.insert(INPUT, Matrix::uniform(n, 3, 1.0, rng));
            let r = Matrix::uniform(n, 6, 1.0, rng);
            Box::new(move |ps, backward| {
                let (out, cache) = lstm.forward(ps, &input(ps)?)?;
                if backward {
                    let dx = lstm.backward(ps, &cache, &r)?;
                    ps.accumulate(INPUT, &dx)?;
                }
                Ok(weighted(&out, &r))
            })
        }
        Component::Attention => {
            let mha = MultiHeadAttention::new("mha", 4, 2)?;
            mha.init(&mut ps, rng);
            zeros.push(mha.bias_name("k"));
            let n = rng.random_range(1..=4);
            ps.insert(INPUT, Matrix::uniform(n, 4, 1.0, rng));
            let r = Matrix::uniform(n, 4, 1.0, rng);
            Box::new(move |ps, backward| {
                let (out, cache) = mha.forward(ps, &input(ps)?)?;
                if backward {
                    let dx = mha.backward(ps, &cache, &r)?;
                    ps.accumulate(INPUT, &dx)?;
                }
                Ok(weighted(&out, &r))
            })
        }
        Component::Linear => {
            let lin = Linear::new("lin", 3, 4);
            lin.init(&mut ps, rng);
            let n = rng.random_range(1..=4);
            ps.insert(INPUT, Matrix::uniform(n, 3, 1.0, rng));
            let r = Matrix::uniform(n, 4, 1.0, rng);
            Box::new(move |ps, backward| {
                let x = input(ps)?;
                let out = lin.forward(ps, &x)?;
                if backward {
                    let dx = lin.backward(ps, &x, &r)?;
                    ps.accumulate(INPUT, &dx)?;
                }
                Ok(weighted(&out, &r))
            })
        }
        Component::Crf => {
            let n = rng.random_range(1..=4);
            let tags = rng.random_range(2..=4);
            ps.insert("emissions", Matrix::uniform(n, tags, 1.0, rng));
            ps.insert("crf.transitions", Matrix::uniform(tags, tags, 1.0, rng));
            ps.insert("crf.start", Matrix::uniform(1, tags, 1.0, rng));
            ps.insert("crf.end", Matrix::uniform(1, tags, 1.0, rng));
            let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..tags)).collect();
            Box::new(move |ps, backward| {
                let tr = TransitionMatrix::new(
                    ps.get("crf.transitions")?.clone(),
                    ps.get("crf.start")?.as_slice().to_vec(),
                    ps.get("crf.end")?.as_slice().to_vec(),
                )?;
                let g = crf_nll_grad(ps.get("emissions")?, &tr, &gold)?;
                if backward {
                    ps.accumulate("emissions", &g.d_emissions)?;
                    ps.accumulate("crf.transitions", &g.d_transitions.scores)?;
                    ps.accumulate("crf.start", &Matrix::row_vector(&g.d_transitions.start))?;
                    ps.accumulate("crf.end", &Matrix::row_vector(&g.d_transitions.end))?;
                }
                Ok(g.loss)
            })
        }
    };
    Ok((ps, loss, zeros))
}

/// True when every nonzero analytic gradient outside `zeros` is at least
/// `floor` in magnitude.
fn resolvable(ps: &mut ParamStore, loss: &mut LossFn, zeros: &[String], floor: f64) -> Result<bool> {
    ps.zero_grads();
    loss(ps, true)?;
    let ok = ps
        .iter()
        .filter(|(n, _)| !zeros.iter().any(|z| z == n))
        .flat_map(|(_, p)| p.grad.as_slice().iter())
        .all(|g| *g == 0.0 || g.abs() >= floor);
    ps.zero_grads();
    Ok(ok)
}

/// Runs one randomized check. With `inject_fault`, analytic gradients are
/// scaled by [`FAULT_SCALE`] before comparison.
pub fn check_component(component: Component, seed: u64, inject_fault: bool) -> Result<ComponentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(component as u64));
    let mut redraws = 0;
    let (mut ps, mut loss, zeros) = loop {
        let (mut ps, mut loss, zeros) = instance(component, &mut rng)?;
        if redraws + 1 == MAX_DRAWS || resolvable(&mut ps, &mut loss, &zeros, component.resolution())? {
            break (ps, loss, zeros);
        }
        redraws += 1;
    };
    let mut report = gradient_check(
        &mut ps,
        |ps, backward| {
            let l = loss(ps, backward)?;
            if backward && inject_fault {
                ps.scale_grads(FAULT_SCALE);
            }
            Ok(l)
        },
        component.tolerance(),
    )?;
    let mut structural_zeros = Vec::new();
    if !zeros.is_empty() {
        ps.zero_grads();
        loss(&mut ps, true)?;
        for z in &zeros {
            let analytic = ps.grad(z)?.max_abs();
            let numeric = report
                .params
                .iter()
                .find(|p| &p.name == z)
                .map_or(0.0, |p| p.max_abs_err);
            structural_zeros.push((z.clone(), analytic.max(numeric)));
        }
        ps.zero_grads();
        report.params.retain(|p| !zeros.contains(&p.name));
    }
    Ok(ComponentCheck {
        component,
        seed,
        report,
        structural_zeros,
        redraws,
    })
}

/// Checks every component under every seed.
pub fn run_suite<I>(components: &[Component], seeds: I, inject_fault: bool) -> Result<Vec<ComponentCheck>>
where
    I: IntoIterator<Item = u64>,
{
    let seeds: Vec<u64> = seeds.into_iter().collect();
    let mut out = Vec::with_capacity(components.len() * seeds.len());
    for &c in components {
        for &s in &seeds {
            out.push(check_component(c, s, inject_fault)?);
        }
    }
    Ok(out)
}

/// Worst relative error per component across all seeds.
pub fn render_report(checks: &[ComponentCheck]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<10}  {:>5}  {:>12}  {:>9}  verdict", "component", "seeds", "max_rel_err", "tolerance").unwrap();
    let mut components: Vec<Component> = checks.iter().map(|c| c.component).collect();
    components.dedup();
    for comp in components {
        let rows: Vec<&ComponentCheck> = checks.iter().filter(|c| c.component == comp).collect();
        let worst = rows.iter().map(|c| c.max_rel_err()).fold(0.0, f64::max);
        let ok = rows.iter().all(|c| c.passed());
        writeln!(
            out,
            "{:<10}  {:>5}  {:>12.3e}  {:>9.0e}  {}",
            comp.name(),
            rows.len(),
            worst,
            comp.tolerance(),
            if ok { "pass" } else { "FAIL" }
        )
        .unwrap();
    }
    out
}
