//! Truncated, warm-started linear conjugate gradient for `Ĝ x = −g`, which
//! minimises the quadratic model `q(x) = xᵀg + ½ xᵀĜx`.

use crate::error::{Error, Result};
use crate::tensor::kernels::{axpy, dot, norm};

/// A matrix-free symmetric linear map. Implementations must be
/// deterministic and positive semi-definite for CG's guarantees to hold.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl<O: LinearOperator + ?Sized> LinearOperator for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(v)
    }
}

/// Row-major dense `n × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::length("DenseOperator", n * n, data.len()));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    /// Assembles the matrix of `op` column by column from `op.apply(eᵢ)`.
    pub fn assemble(op: &impl LinearOperator) -> Result<Self> {
        let n = op.dim();
        let mut data = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = op.apply(&e)?;
            e[j] = 0.0;
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        Ok(Self { n, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::length("DenseOperator::apply", self.n, v.len()));
        }
        Ok(self.data.chunks_exact(self.n).map(|row| dot(row, v)).collect())
    }
}

/// Adapts a closure into an operator of fixed dimension.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (self.f)(v)
    }
}

/// `v ↦ op(v) + d·v`
#[derive(Clone, Debug)]
pub struct Damped<O> {
    inner: O,
    damping: f64,
}

impl<O: LinearOperator> LinearOperator for Damped<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.inner.apply(v)?;
        if self.damping != 0.0 {
            axpy(self.damping, v, &mut out);
        }
        Ok(out)
    }
}

/// Tikhonov damping `Ĝ = G + dI`.
pub fn damp<O: LinearOperator>(op: O, d: f64) -> Result<Damped<O>> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("damping must be finite and >= 0, got {d}")));
    }
    Ok(Damped { inner: op, damping: d })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopCriterion {
    /// Stop once `‖r_k‖ / ‖g‖ ≤ tol`.
    RelativeResidual { tol: f64 },
    /// Stop once `q_i < 0` and `(q_i − q_{i−j}) / q_i < j·tol` where
    /// `j = max(min_window, ⌈0.1 i⌉)` and `i > j`.
    QuadraticProgress { min_window: usize, tol: f64 },
}

impl Default for StopCriterion {
    fn default() -> Self {
        StopCriterion::RelativeResidual { tol: 1e-4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    pub max_iters: usize,
    pub stop: StopCriterion,
    /// Applied by callers through [`damp`]; `cg_solve` expects an operator
    /// that is already damped.
    pub damping: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            stop: StopCriterion::default(),
            damping: 0.0,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        match self.stop {
            StopCriterion::RelativeResidual { tol } if !(tol > 0.0) => {
                return Err(Error::invalid(format!("CG tolerance must be > 0, got {tol}")))
            }
            StopCriterion::QuadraticProgress { min_window, tol } if !(tol > 0.0) || min_window == 0 => {
                return Err(Error::invalid(format!(
                    "CG progress criterion needs tol > 0 and window >= 1, got tol {tol}, window {min_window}"
                )))
            }
            _ => {}
        }
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(Error::invalid(format!("damping must be >= 0, got {}", self.damping)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgStop {
    Converged,
    Progress,
    MaxIters,
    /// `pᵀĜp ≤ 0`; the iterate before that direction is returned.
    NonPositiveCurvature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Norm of the recurrence residual `−g − Ĝx` at exit.
    pub residual_norm: f64,
    /// `q(x₀), q(x₁), …` — one entry more than `iterations`.
    pub q_history: Vec<f64>,
    pub stop: CgStop,
}

impl CgResult {
    pub fn final_q(&self) -> f64 {
        *self.q_history.last().expect("q_history holds q(x0)")
    }
}

/// `xᵀg + ½ xᵀ op(x)`
pub fn quadratic_value(op: &impl LinearOperator, g: &[f64], x: &[f64]) -> Result<f64> {
    if g.len() != op.dim() || x.len() != op.dim() {
        return Err(Error::length("quadratic_value", op.dim(), g.len().max(x.len())));
    }
    let ax = op.apply(x)?;
    Ok(dot(x, g) + 0.5 * dot(x, &ax))
}

fn finite(label: &str, v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{label}[{i}] = {}", v[i])));
    }
    Ok(())
}

/// Minimises `q` starting from `x0`.
pub fn cg_solve(op: &impl LinearOperator, g: &[f64], x0: &[f64], cfg: &CgConfig) -> Result<CgResult> {
    cfg.validate()?;
    let n = op.dim();
    if g.len() != n {
        return Err(Error::length("cg_solve gradient", n, g.len()));
    }
    if x0.len() != n {
        return Err(Error::length("cg_solve warm start", n, x0.len()));
    }
    finite("gradient", g)?;
    finite("warm start", x0)?;

    let mut x = x0.to_vec();
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    if x.iter().any(|&v| v != 0.0) {
        let ax = op.apply(&x)?;
        finite("G·x0", &ax)?;
        axpy(-1.0, &ax, &mut r);
    }
    let q_of = |x: &[f64], r: &[f64]| 0.5 * (dot(x, g) - dot(x, r));
    let mut q_history = vec![q_of(&x, &r)];

    let g_norm = norm(g);
    let scale = if g_norm > 0.0 { g_norm } else { 1.0 };
    let mut rr = dot(&r, &r);
    let done = |rr: f64| match cfg.stop {
        StopCriterion::RelativeResidual { tol } => rr.sqrt() / scale <= tol,
        StopCriterion::QuadraticProgress { .. } => rr == 0.0,
    };
    let finish = |x, iterations, rr: f64, q_history, stop| CgResult {
        x,
        iterations,
        residual_norm: rr.sqrt(),
        q_history,
        stop,
    };

    if done(rr) {
        return Ok(finish(x, 0, rr, q_history, CgStop::Converged));
    }

    let mut p = r.clone();
    for k in 0..cfg.max_iters {
        let ap = op.apply(&p)?;
        finite("G·p", &ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Ok(finish(x, k, rr, q_history, CgStop::NonPositiveCurvature));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        let q = q_of(&x, &r);
        if !q.is_finite() || !rr_next.is_finite() {
            return Err(Error::NonFinite(format!("CG iteration {k}: q = {q}, |r|² = {rr_next}")));
        }
        q_history.push(q);
        let i = k + 1;

        if done(rr_next) {
            return Ok(finish(x, i, rr_next, q_history, CgStop::Converged));
        }
        if let StopCriterion::QuadraticProgress { min_window, tol } = cfg.stop {
            let j = min_window.max((0.1 * i as f64).ceil() as usize);
            if i > j && q < 0.0 && (q - q_history[i - j]) / q < j as f64 * tol {
                return Ok(finish(x, i, rr_next, q_history, CgStop::Progress));
            }
        }

        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
    }
    Ok(finish(x, cfg.max_iters, rr, q_history, CgStop::MaxIters))
}
