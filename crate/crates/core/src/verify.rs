//! Self-checks runnable from the command line: finite differences, dense
//! oracles, block equivalence and CG properties, each reported as a measured
//! error against a fixed tolerance.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{loss_output_hessian_apply, EvalContext, Fault, GgnOperator, Graph, GraphBuilder, LossKind};
use crate::cg::{cg_solve, damp, CgConfig, DenseOperator, LinearOperator, StopCriterion};
use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::models::{Init, ParamVector};
use crate::optimizer::{
    adam_step, block_hf_step_feeds, make_block_operator, polyak_update, AdamConfig, AdamState, BlockPartition,
    HfConfig, TrainerState,
};
use crate::rng::{seeded_uniform, Rng};
use crate::tensor::{kernels, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Autodiff,
    Cg,
    Optimizer,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autodiff" => Ok(Suite::Autodiff),
            "cg" => Ok(Suite::Cg),
            "optimizer" => Ok(Suite::Optimizer),
            "all" => Ok(Suite::All),
            other => Err(Error::UnknownName {
                kind: "verification suite",
                name: other.into(),
                allowed: "autodiff, cg, optimizer, all".into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    fn push(&mut self, suite: &'static str, name: &'static str, measured: f64, tolerance: f64) {
        // NaN must fail, so store it as +inf.
        let measured = if measured.is_nan() { f64::INFINITY } else { measured };
        self.checks.push(Check {
            suite,
            name,
            measured,
            tolerance,
        });
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {:<9} {:<44} measured {:<11.3e} tolerance {:.1e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.suite,
                c.name,
                c.measured,
                c.tolerance
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed()).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Corrupts a derivative rule in every graph the suites build; the
    /// report is then expected to fail.
    pub fault: Option<Fault>,
}

pub fn verify(suite: Suite, opts: &VerifyOptions) -> Result<Report> {
    let mut report = Report::default();
    if matches!(suite, Suite::Autodiff | Suite::All) {
        autodiff_suite(&mut report, opts)?;
    }
    if matches!(suite, Suite::Cg | Suite::All) {
        cg_suite(&mut report, opts)?;
    }
    if matches!(suite, Suite::Optimizer | Suite::All) {
        optimizer_suite(&mut report, opts)?;
    }
    Ok(report)
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, floor)`
pub(crate) fn coordinate_rel(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `‖a − b‖∞ / ‖b‖∞`
pub(crate) fn vector_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn dense_solve(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col] == 0.0 {
            return Err(Error::invalid("singular system"));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for i in col + 1..n {
            let f = a[i * n + col] / a[col * n + col];
            for k in col..n {
                a[i * n + k] -= f * a[col * n + k];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Ok(x)
}

/// `(1/m) Σ J_sᵀ H_s J_s` assembled from Jacobian columns (one jvp per
/// parameter) and explicit per-sample output Hessians.
pub(crate) fn dense_ggn(graph: &Graph, feed: &[&Tensor], w: &[f64]) -> Result<Vec<f64>> {
    let n = graph.param_count();
    let mut ctx = EvalContext::new(graph);
    let out = graph.output().ok_or(Error::MissingNode("output"))?;
    let z = graph.evaluate(&mut ctx, feed, w, out)?;
    let (m, k) = (z.rows(), z.cols());
    let kind = graph.loss_kind().ok_or(Error::MissingNode("fused loss"))?;
    let target = feed
        .get(1)
        .copied()
        .ok_or_else(|| Error::invalid("dense oracle expects (x, y) feeds"))?;
    let mut jac = vec![0.0; m * k * n]; // jac[(s*k + o)*n + p]
    let mut e = vec![0.0; n];
    for p in 0..n {
        e[p] = 1.0;
        let col = graph.jvp(&mut ctx, feed, w, &e, None)?;
        for (r, v) in col.data().iter().enumerate() {
            jac[r * n + p] = *v;
        }
        e[p] = 0.0;
    }
    let mut g = vec![0.0; n * n];
    for s in 0..m {
        let zs = Tensor::matrix(1, k, z.row(s).to_vec())?;
        let ys = Tensor::matrix(1, k, target.row(s).to_vec())?;
        let mut h = vec![0.0; k * k];
        for j in 0..k {
            let mut u = vec![0.0; k];
            u[j] = 1.0;
            let col = loss_output_hessian_apply(kind, &zs, &ys, &Tensor::matrix(1, k, u)?)?;
            for i in 0..k {
                h[i * k + j] = col.data()[i];
            }
        }
        let js = &jac[s * k * n..(s + 1) * k * n];
        for a in 0..k {
            for b in 0..k {
                let hab = h[a * k + b] / m as f64;
                if hab == 0.0 {
                    continue;
                }
                for p in 0..n {
                    let jp = js[a * n + p] * hab;
                    for q in 0..n {
                        g[p * n + q] += jp * js[b * n + q];
                    }
                }
            }
        }
    }
    Ok(g)
}

fn matvec(n: usize, a: &[f64], v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| kernels::dot(&a[i * n..(i + 1) * n], v)).collect()
}

/// Small tanh MLP `x[8×4] → 6 → 3` with random data and weights.
struct Mlp {
    graph: Graph,
    x: Tensor,
    y: Tensor,
    w: Vec<f64>,
}

impl Mlp {
    fn new(kind: LossKind, hidden_tanh: bool, fault: Option<Fault>, rng: &mut Rng) -> Result<Self> {
        let mut b = GraphBuilder::new();
        let x = b.input("x", 4)?;
        let y = b.input("y", 3)?;
        let z = if hidden_tanh {
            let w1 = b.param("l1.w", 4, 6, Init::Glorot { fan_in: 4, fan_out: 6 })?;
            let b1 = b.param("l1.b", 1, 6, Init::Zeros)?;
            let w2 = b.param("l2.w", 6, 3, Init::Glorot { fan_in: 6, fan_out: 3 })?;
            let b2 = b.param("l2.b", 1, 3, Init::Zeros)?;
            let a = b.matmul(x, w1)?;
            let a = b.add(a, b1)?;
            let h = b.tanh(a)?;
            let o = b.matmul(h, w2)?;
            b.add(o, b2)?
        } else {
            let w1 = b.param("l1.w", 4, 3, Init::Glorot { fan_in: 4, fan_out: 3 })?;
            let b1 = b.param("l1.b", 1, 3, Init::Zeros)?;
            let a = b.matmul(x, w1)?;
            b.add(a, b1)?
        };
        b.loss(kind, z, y)?;
        let mut graph = b.build()?;
        if let Some(f) = fault {
            graph.inject_fault(f);
        }
        let xs = seeded_uniform(&[8, 4], -1.0, 1.0, rng)?;
        let ys = match kind {
            LossKind::Mse => seeded_uniform(&[8, 3], -1.0, 1.0, rng)?,
            LossKind::SoftmaxCrossEntropy => {
                let labels: Vec<usize> = (0..8).map(|_| rng.below(3)).collect();
                one_hot(&labels, 3)?
            }
        };
        let w = seeded_uniform(&[graph.param_count()], -1.0, 1.0, rng)?.into_data();
        Ok(Self { graph, x: xs, y: ys, w })
    }

    fn feed(&self) -> [&Tensor; 2] {
        [&self.x, &self.y]
    }

    fn direction(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.w.len()).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }
}

fn autodiff_suite(report: &mut Report, opts: &VerifyOptions) -> Result<()> {
    const S: &str = "autodiff";
    let mut rng = Rng::new(opts.seed);
    let eps = 1e-5;
    let (mut grad_err, mut hvp_err, mut ggn_err, mut sym_err, mut psd_err, mut adj_err) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for kind in [LossKind::Mse, LossKind::SoftmaxCrossEntropy] {
        let net = Mlp::new(kind, true, opts.fault, &mut rng)?;
        let g = &net.graph;
        let feed = net.feed();
        let mut ctx = EvalContext::new(g);
        let grad = g.grad(&mut ctx, &feed, &net.w)?;

        let mut fd = vec![0.0; net.w.len()];
        for i in 0..net.w.len() {
            let mut w = net.w.clone();
            w[i] += eps;
            let lp = g.loss_value(&mut ctx, &feed, &w)?;
            w[i] -= 2.0 * eps;
            let lm = g.loss_value(&mut ctx, &feed, &w)?;
            fd[i] = (lp - lm) / (2.0 * eps);
        }
        grad_err = grad_err.max(coordinate_rel(&grad, &fd, 1e-4));

        for _ in 0..3 {
            let v = net.direction(&mut rng);
            let hv = g.hvp(&mut ctx, &feed, &net.w, &v)?;
            let shifted = |sign: f64| -> Vec<f64> { net.w.iter().zip(&v).map(|(w, v)| w + sign * eps * v).collect() };
            let gp = g.grad(&mut ctx, &feed, &shifted(1.0))?;
            let gm = g.grad(&mut ctx, &feed, &shifted(-1.0))?;
            let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            hvp_err = hvp_err.max(coordinate_rel(&hv, &fd, 1e-4));

            let jv = g.jvp(&mut ctx, &feed, &net.w, &v, g.loss())?;
            adj_err = adj_err.max((jv.data()[0] - kernels::dot(&grad, &v)).abs());
        }

        let dense = dense_ggn(g, &feed, &net.w)?;
        let op = GgnOperator::new(g, &feed, &net.w)?;
        let n = net.w.len();
        for _ in 0..20 {
            let v = net.direction(&mut rng);
            let u = net.direction(&mut rng);
            let gv = op.apply(&v)?;
            ggn_err = ggn_err.max(vector_rel(&gv, &matvec(n, &dense, &v)));
            let gu = op.apply(&u)?;
            sym_err = sym_err.max((kernels::dot(&u, &gv) - kernels::dot(&v, &gu)).abs());
            psd_err = psd_err.max(-kernels::dot(&v, &gv));
        }
    }
    report.push(S, "grad vs central differences (max rel)", grad_err, 1e-6);
    report.push(S, "hvp vs gradient differences (max rel)", hvp_err, 1e-5);
    report.push(S, "ggn_vp vs dense J^T H J (max rel)", ggn_err, 1e-8);
    report.push(S, "ggn symmetry |u'Gv - v'Gu|", sym_err, 1e-10);
    report.push(S, "ggn PSD: max(-v'Gv)", psd_err, 1e-10);
    report.push(S, "jvp(loss) vs grad.v", adj_err, 1e-10);

    let mut lin_err = 0.0f64;
    for kind in [LossKind::Mse, LossKind::SoftmaxCrossEntropy] {
        let net = Mlp::new(kind, false, opts.fault, &mut rng)?;
        let feed = net.feed();
        let mut ctx = EvalContext::new(&net.graph);
        for _ in 0..5 {
            let v = net.direction(&mut rng);
            let gv = net.graph.ggn_vp(&mut ctx, &feed, &net.w, &v)?;
            let hv = net.graph.hvp(&mut ctx, &feed, &net.w, &v)?;
            lin_err = lin_err.max(gv.iter().zip(&hv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    report.push(S, "linear net: ggn_vp == hvp (max abs)", lin_err, 1e-8);
    Ok(())
}

/// Random SPD matrix `Q diag(λ) Qᵀ`: `λ` uniform on `[1, cond]` with both
/// endpoints included, so the condition number is exactly `cond`.
pub(crate) fn random_spd(n: usize, cond: f64, rng: &mut Rng) -> Vec<f64> {
    let q = random_orthogonal(n, rng);
    let lambda: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0,
            1 => cond,
            _ => rng.uniform(1.0, cond),
        })
        .collect();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (0..n).map(|k| q[i * n + k] * lambda[k] * q[j * n + k]).sum();
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
    a
}

/// Columns of a random orthogonal matrix via modified Gram–Schmidt.
pub(crate) fn random_orthogonal(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        for c in &cols {
            let d = kernels::dot(&v, c);
            kernels::axpy(-d, c, &mut v);
        }
        let norm = kernels::norm(&v);
        if norm > 1e-8 {
            cols.push(v.iter().map(|x| x / norm).collect());
        }
    }
    let mut q = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            q[i * n + j] = c[i];
        }
    }
    q
}

fn cg_suite(report: &mut Report, opts: &VerifyOptions) -> Result<()> {
    const S: &str = "cg";
    let tight = CgConfig {
        max_iters: 2,
        stop: StopCriterion::RelativeResidual { tol: 1e-12 },
        damping: 0.0,
    };
    let op = DenseOperator::new(2, vec![4.0, 1.0, 1.0, 3.0])?;
    let r = cg_solve(&op, &[-1.0, -2.0], &[0.0, 0.0], &tight)?;
    report.push(S, "2x2 system: residual norm", r.residual_norm, 1e-8);
    report.push(S, "2x2 system: error vs [1/11, 7/11]", vector_rel(&r.x, &[1.0 / 11.0, 7.0 / 11.0]), 1e-12);

    let mut rng = Rng::new(opts.seed ^ 0xC6);
    let (mut resid, mut mono, mut direct) = (0.0f64, 0.0f64, 0.0f64);
    for &n in &[5usize, 12, 30] {
        let a = random_spd(n, 1e3, &mut rng);
        let g: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let op = DenseOperator::new(n, a.clone())?;
        let cfg = CgConfig {
            max_iters: n,
            stop: StopCriterion::RelativeResidual { tol: 1e-10 },
            damping: 0.0,
        };
        let r = cg_solve(&op, &g, &vec![0.0; n], &cfg)?;
        let true_res: Vec<f64> = {
            let ax = op.apply(&r.x)?;
            ax.iter().zip(&g).map(|(a, g)| a + g).collect()
        };
        resid = resid.max(kernels::norm(&true_res) / kernels::norm(&g));
        mono = mono.max(r.q_history.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1.0)).fold(0.0, f64::max));
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        direct = direct.max(vector_rel(&r.x, &dense_solve(n, a, neg_g)?));
    }
    report.push(S, "SPD (n<=30, cond 1e3): rel residual in n its", resid, 1e-8);
    report.push(S, "q_history relative increase (max)", mono, 1e-12);
    report.push(S, "solution vs dense direct solve (max rel)", direct, 1e-8);

    let n = 10;
    let a = random_spd(n, 100.0, &mut rng);
    let g: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let d = 1e6 * 100.0;
    let op = damp(DenseOperator::new(n, a)?, d)?;
    let r = cg_solve(&op, &g, &vec![0.0; n], &CgConfig::default())?;
    let cos = -kernels::dot(&r.x, &g) / (kernels::norm(&r.x) * kernels::norm(&g));
    report.push(S, "heavy damping: 1 - cos(x, -g)", 1.0 - cos, 1e-6);
    Ok(())
}

/// `ℓ(w) = ½ (w − w*)ᵀ A (w − w*)` with `A = LᵀL`, written as an MSE of
/// `(w − w*) Lᵀ` against zero. Each entry of `blocks` becomes its own leaf
/// and contributes an independent diagonal block of `A`.
pub(crate) fn quadratic_graph(
    blocks: &[(Vec<f64>, Vec<f64>)], // (L_b row-major, w*_b)
    fault: Option<Fault>,
) -> Result<Graph> {
    let mut b = GraphBuilder::new();
    let mut outs = Vec::new();
    for (i, (l, target)) in blocks.iter().enumerate() {
        let n = target.len();
        let w = b.param(&format!("b{i}"), 1, n, Init::Zeros)?;
        let shift = b.constant(Tensor::matrix(1, n, target.iter().map(|v| -v).collect())?)?;
        let d = b.add(w, shift)?;
        let mut lt = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                lt[c * n + r] = l[r * n + c];
            }
        }
        let lt = b.constant(Tensor::matrix(n, n, lt)?)?;
        outs.push(b.matmul(d, lt)?);
    }
    let z = if outs.len() == 1 { outs[0] } else { b.concat_cols(&outs)? };
    let width: usize = blocks.iter().map(|(_, t)| t.len()).sum();
    let zero = b.constant(Tensor::zeros(&[1, width]))?;
    b.loss(LossKind::Mse, z, zero)?;
    let mut g = b.build()?;
    if let Some(f) = fault {
        g.inject_fault(f);
    }
    Ok(g)
}

/// `L = diag(√λ) Qᵀ`, so `LᵀL` is SPD with eigenvalues `λ ∈ [1, cond]`.
pub(crate) fn random_factor(n: usize, cond: f64, rng: &mut Rng) -> Vec<f64> {
    let q = random_orthogonal(n, rng);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let s = cond.powf(t).sqrt();
        for j in 0..n {
            l[i * n + j] = s * q[j * n + i];
        }
    }
    l
}

fn optimizer_suite(report: &mut Report, opts: &VerifyOptions) -> Result<()> {
    const S: &str = "optimizer";
    let mut rng = Rng::new(opts.seed ^ 0x0971);

    // Block operators against the dense GGN restricted to each block.
    let net = Mlp::new(LossKind::SoftmaxCrossEntropy, true, opts.fault, &mut rng)?;
    let layout = net.graph.layout().clone();
    let partition = BlockPartition::by_prefix(&layout, &[("l1", &["l1."]), ("l2", &["l2."])])?;
    let feed = net.feed();
    let n = net.w.len();
    let dense = dense_ggn(&net.graph, &feed, &net.w)?;
    let ggn = GgnOperator::new(&net.graph, &feed, &net.w)?;
    let mut block_err = 0.0f64;
    for b in 0..partition.len() {
        let op = make_block_operator(&ggn, &partition, b)?;
        let v: Vec<f64> = (0..partition.block_size(b)).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let want = partition.gather(b, &matvec(n, &dense, &partition.embed(b, &v)));
        block_err = block_err.max(vector_rel(&op.apply(&v)?, &want));
    }
    report.push(S, "block operator vs dense diagonal block", block_err, 1e-12);

    // Full block step against a dense block-diagonal Newton-like step.
    let cfg = HfConfig {
        learning_rate: 0.5,
        gradient_batch: 8,
        curvature_batch: 8,
        cg: CgConfig {
            max_iters: 500,
            stop: StopCriterion::RelativeResidual { tol: 1e-13 },
            damping: 0.1,
        },
        ..HfConfig::default()
    };
    let mut state = TrainerState::new(ParamVector::from_values(layout.clone(), net.w.clone())?, &partition)?;
    let report_step = block_hf_step_feeds(&mut state, &net.graph, &partition, &feed, &feed, &cfg)?;
    let grad = net.graph.grad(&mut EvalContext::new(&net.graph), &feed, &net.w)?;
    let mut expect = net.w.clone();
    for b in 0..partition.len() {
        let idx: Vec<usize> = partition.blocks()[b].ranges().iter().flat_map(|r| r.clone()).collect();
        let m = idx.len();
        let mut a = vec![0.0; m * m];
        for (i, &p) in idx.iter().enumerate() {
            for (j, &q) in idx.iter().enumerate() {
                a[i * m + j] = dense[p * n + q] + if i == j { cfg.cg.damping } else { 0.0 };
            }
        }
        let rhs: Vec<f64> = idx.iter().map(|&p| -grad[p]).collect();
        let x = dense_solve(m, a, rhs)?;
        for (i, &p) in idx.iter().enumerate() {
            expect[p] += cfg.learning_rate * x[i];
        }
    }
    let _ = report_step;
    report.push(S, "block_hf_step vs dense block-diagonal step", vector_rel(state.w.values(), &expect), 1e-8);

    // One-shot Newton on a 50-dimensional quadratic.
    let dim = 50;
    let target: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let graph = quadratic_graph(&[(random_factor(dim, 100.0, &mut rng), target.clone())], opts.fault)?;
    let single = BlockPartition::single(graph.layout());
    let mut state = TrainerState::new(ParamVector::zeros(graph.layout().clone()), &single)?;
    let newton = HfConfig {
        learning_rate: 1.0,
        gradient_batch: 1,
        curvature_batch: 1,
        cg: CgConfig {
            max_iters: dim,
            stop: StopCriterion::RelativeResidual { tol: 1e-12 },
            damping: 0.0,
        },
        ..HfConfig::default()
    };
    block_hf_step_feeds(&mut state, &graph, &single, &[], &[], &newton)?;
    let miss = state
        .w
        .values()
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.push(S, "one HF step on SPD quadratic: |w - w*|max", miss, 1e-6);

    // Serial and parallel block solves agree bit for bit.
    let mut serial = TrainerState::new(ParamVector::from_values(layout.clone(), net.w.clone())?, &partition)?;
    let mut parallel = serial.clone();
    let small = HfConfig {
        gradient_batch: 8,
        curvature_batch: 4,
        ..HfConfig::default()
    };
    let half = [
        &net.x.select_rows(&[0, 1, 2, 3])?,
        &net.y.select_rows(&[0, 1, 2, 3])?,
    ];
    for _ in 0..3 {
        block_hf_step_feeds(&mut serial, &net.graph, &partition, &feed, &half, &small)?;
        block_hf_step_feeds(
            &mut parallel,
            &net.graph,
            &partition,
            &feed,
            &half,
            &HfConfig {
                parallel_blocks: true,
                ..small
            },
        )?;
    }
    let differing = serial
        .w
        .values()
        .iter()
        .zip(parallel.w.values())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    report.push(S, "parallel vs serial blocks: differing bits", differing as f64, 0.0);

    // Warm start with a zero iteration budget returns 0.95 × the stored solution.
    let stored = serial.momentum.clone();
    let frozen = HfConfig {
        cg: CgConfig {
            max_iters: 0,
            ..small.cg
        },
        ..small
    };
    let step = block_hf_step_feeds(&mut serial, &net.graph, &partition, &feed, &half, &frozen)?;
    let mut warm_err = 0.0f64;
    for b in 0..partition.len() {
        let got = partition.gather(b, &step.direction);
        for (g, s) in got.iter().zip(&stored[b]) {
            warm_err = warm_err.max((g - 0.95 * s).abs());
        }
    }
    report.push(S, "max_iters = 0: direction == 0.95 x stored", warm_err, 0.0);

    // Adam's first step and Polyak's closed form.
    let adam = AdamConfig::default();
    let g: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 + i as f64 } else { -3.0 - i as f64 }).collect();
    let mut w = vec![0.0; g.len()];
    adam_step(&mut AdamState::new(g.len()), &mut w, &g, &adam)?;
    let adam_err = w
        .iter()
        .zip(&g)
        .map(|(w, g)| (w + adam.learning_rate * g.signum()).abs())
        .fold(0.0, f64::max);
    report.push(S, "adam first step vs -lr*sign(g)", adam_err, adam.learning_rate * 1e-6);

    let mut avg = [0.0];
    let mut polyak_err = 0.0f64;
    for t in 1..=100 {
        polyak_update(&mut avg, &[1.0], 0.99)?;
        if [1, 10, 100].contains(&t) {
            polyak_err = polyak_err.max((avg[0] - (1.0 - 0.99f64.powi(t))).abs());
        }
    }
    report.push(S, "polyak average vs 1 - 0.99^t", polyak_err, 1e-12);
    Ok(())
}
