//! Forward values, forward-mode tangents (R-operator) and reverse-mode
//! adjoints (L-operator) over a [`Graph`].
//!
//! The reverse pass can run in second-order mode. It then differentiates the
//! tangent program as well: every node carries an ordinary adjoint `ḡ` and an
//! adjoint `r̄` of its value inside `vᵀ∇ℓ`. Seeding `ḡ = 1` at the loss makes
//! the parameters' `r̄` equal `∇(vᵀ∇ℓ) = Hv`, i.e. `L{R_v{ℓ}}`.

use crate::autodiff::graph::{Fault, Graph, LossKind, NodeId, Op};
use crate::autodiff::mat::{self, dims};
use crate::error::{Error, Result};
use crate::tensor::{kernels, Tensor};

pub(crate) type Tangents = Vec<Option<Tensor>>;

/// Mutable buffers for evaluating one graph. Not shared between threads.
#[derive(Debug)]
pub struct EvalContext {
    graph_id: u64,
    values: Vec<Tensor>,
    tangents: Tangents,
}

impl EvalContext {
    pub fn new(graph: &Graph) -> Self {
        Self {
            graph_id: graph.id,
            values: Vec::new(),
            tangents: Vec::new(),
        }
    }

    /// Value of `node` from the most recent forward pass.
    pub fn value(&self, node: NodeId) -> Option<&Tensor> {
        self.values.get(node.0)
    }

    /// Tangent of `node` from the most recent `jvp`; `None` means zero.
    pub fn tangent(&self, node: NodeId) -> Option<&Tensor> {
        self.tangents.get(node.0).and_then(Option::as_ref)
    }

    fn check(&self, graph: &Graph) -> Result<()> {
        if self.graph_id != graph.id {
            return Err(Error::ContextMismatch);
        }
        Ok(())
    }
}

fn same_or_row(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    let ((m, n), (bm, bn)) = (dims(a), dims(b));
    if bn == n && (bm == m || bm == 1) {
        Ok(())
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

impl Graph {
    pub(crate) fn check_params(&self, op: &'static str, w: &[f64]) -> Result<()> {
        if w.len() != self.layout.len() {
            return Err(Error::length(op, self.layout.len(), w.len()));
        }
        Ok(())
    }

    /// Evaluates every node. `feed` binds the input leaves in declaration order.
    pub(crate) fn eval_values(&self, feed: &[&Tensor], w: &[f64]) -> Result<Vec<Tensor>> {
        self.check_params("forward", w)?;
        if feed.len() < self.inputs.len() {
            return Err(Error::UnboundInput(self.inputs[feed.len()].name.clone()));
        }
        if feed.len() > self.inputs.len() {
            return Err(Error::length("forward inputs", self.inputs.len(), feed.len()));
        }
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for op in &self.nodes {
            let v = match op {
                Op::Param(k) => {
                    let leaf = &self.layout.leaves()[*k];
                    Tensor::matrix(leaf.shape[0], leaf.shape[1], w[leaf.range()].to_vec())?
                }
                Op::Input(k) => {
                    let (leaf, t) = (&self.inputs[*k], feed[*k]);
                    if t.shape().len() != 2 || t.shape()[1] != leaf.cols {
                        return Err(Error::shape("input", &[0, leaf.cols], t.shape()));
                    }
                    t.clone()
                }
                Op::Const(t) => t.clone(),
                Op::MatMul(a, b) => {
                    let (x, y) = (&values[a.0], &values[b.0]);
                    if dims(x).1 != dims(y).0 {
                        return Err(Error::shape("matmul", x.shape(), y.shape()));
                    }
                    mat::mm(x, y)
                }
                Op::Add(a, b) => {
                    let (x, y) = (&values[a.0], &values[b.0]);
                    same_or_row("add", x, y)?;
                    mat::zip_bcast(x, y, |p, q| p + q)
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&values[a.0], &values[b.0]);
                    same_or_row("mul", x, y)?;
                    mat::hadamard(x, y)
                }
                Op::Tanh(a) => values[a.0].map(f64::tanh),
                Op::Sigmoid(a) => values[a.0].map(sigmoid),
                Op::SliceCols { src, start, len } => {
                    let x = &values[src.0];
                    if start + len > dims(x).1 {
                        return Err(Error::shape("slice", x.shape(), &[*start, start + len]));
                    }
                    mat::slice_cols(x, *start, *len)
                }
                Op::ConcatCols(parts) => {
                    let ts: Vec<&Tensor> = parts.iter().map(|p| &values[p.0]).collect();
                    let rows = dims(ts[0]).0;
                    if let Some(bad) = ts.iter().find(|t| dims(t).0 != rows) {
                        return Err(Error::shape("concat", ts[0].shape(), bad.shape()));
                    }
                    mat::concat_cols(&ts)
                }
                Op::MeanRows(a) => mat::mean_rows(&values[a.0]),
                Op::Sum(a) => Tensor::scalar(values[a.0].data().iter().sum()),
                Op::Scale(a, c) => values[a.0].scale(*c),
                Op::Loss { kind, pred, target } => {
                    let (z, y) = (&values[pred.0], &values[target.0]);
                    if z.shape() != y.shape() {
                        return Err(Error::shape(kind.name(), z.shape(), y.shape()));
                    }
                    Tensor::scalar(loss_value(*kind, z, y))
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Forward-mode pass: tangent of every node along parameter direction `v`.
    pub(crate) fn eval_tangents(&self, values: &[Tensor], v: &[f64]) -> Tangents {
        let mut tan: Tangents = Vec::with_capacity(self.nodes.len());
        for (i, op) in self.nodes.iter().enumerate() {
            let t = match op {
                Op::Param(k) => {
                    let leaf = &self.layout.leaves()[*k];
                    let slice = &v[leaf.range()];
                    if slice.iter().all(|&x| x == 0.0) {
                        None
                    } else {
                        Some(
                            Tensor::matrix(leaf.shape[0], leaf.shape[1], slice.to_vec())
                                .expect("leaf shape"),
                        )
                    }
                }
                Op::Input(_) | Op::Const(_) => None,
                Op::MatMul(a, b) => {
                    let left = tan[a.0].as_ref().map(|da| mat::mm(da, &values[b.0]));
                    let right = tan[b.0].as_ref().map(|db| mat::mm(&values[a.0], db));
                    mat::add_opt(left, right)
                }
                Op::Add(a, b) => {
                    let da = tan[a.0].clone();
                    let db = tan[b.0].as_ref().map(|db| {
                        if db.shape() == values[i].shape() {
                            db.clone()
                        } else {
                            mat::repeat_row(db, dims(&values[i]).0)
                        }
                    });
                    mat::add_opt(da, db)
                }
                Op::Mul(a, b) => {
                    let left = tan[a.0].as_ref().map(|da| mat::hadamard(da, &values[b.0]));
                    let right = tan[b.0].as_ref().map(|db| mat::hadamard(&values[a.0], db));
                    mat::add_opt(left, right)
                }
                Op::Tanh(a) => tan[a.0].as_ref().map(|da| {
                    let y = &values[i];
                    if self.fault == Some(Fault::TanhTangent) {
                        mat::zip_bcast(da, y, |d, y| d * (1.0 - y))
                    } else {
                        mat::zip_bcast(da, y, |d, y| d * (1.0 - y * y))
                    }
                }),
                Op::Sigmoid(a) => tan[a.0]
                    .as_ref()
                    .map(|da| mat::zip_bcast(da, &values[i], |d, s| d * s * (1.0 - s))),
                Op::SliceCols { src, start, len } => {
                    tan[src.0].as_ref().map(|d| mat::slice_cols(d, *start, *len))
                }
                Op::ConcatCols(parts) => {
                    if parts.iter().all(|p| tan[p.0].is_none()) {
                        None
                    } else {
                        let zeros: Vec<Tensor> = parts
                            .iter()
                            .map(|p| Tensor::zeros(values[p.0].shape()))
                            .collect();
                        let ts: Vec<&Tensor> = parts
                            .iter()
                            .zip(&zeros)
                            .map(|(p, z)| tan[p.0].as_ref().unwrap_or(z))
                            .collect();
                        Some(mat::concat_cols(&ts))
                    }
                }
                Op::MeanRows(a) => tan[a.0].as_ref().map(mat::mean_rows),
                Op::Sum(a) => tan[a.0]
                    .as_ref()
                    .map(|d| Tensor::scalar(d.data().iter().sum())),
                Op::Scale(a, c) => tan[a.0].as_ref().map(|d| d.scale(*c)),
                Op::Loss { kind, pred, target } => tan[pred.0].as_ref().map(|dz| {
                    let g = loss_grad(*kind, &values[pred.0], &values[target.0]);
                    Tensor::scalar(kernels::dot(g.data(), dz.data()))
                }),
            };
            tan.push(t);
        }
        tan
    }

    /// Reverse pass from a single seeded node. Returns the flat parameter
    /// adjoints and, in second-order mode, the flat `r̄` adjoints.
    pub(crate) fn reverse(
        &self,
        values: &[Tensor],
        tangents: Option<&[Option<Tensor>]>,
        seed: NodeId,
        seed_adjoint: Tensor,
    ) -> (Vec<f64>, Option<Vec<f64>>) {
        let n = seed.0 + 1;
        let mut g: Vec<Option<Tensor>> = vec![None; n];
        let mut r: Vec<Option<Tensor>> = if tangents.is_some() {
            vec![None; n]
        } else {
            Vec::new()
        };
        g[seed.0] = Some(seed_adjoint);

        for i in (0..n).rev() {
            let gy = g[i].take();
            let ry = if tangents.is_some() { r[i].take() } else { None };
            if gy.is_none() && ry.is_none() {
                continue;
            }
            if matches!(self.nodes[i], Op::Param(_)) {
                g[i] = gy;
                if tangents.is_some() {
                    r[i] = ry;
                }
                continue;
            }
            let tan = |id: NodeId| tangents.and_then(|t| t[id.0].as_ref());
            self.backward_node(i, values, tan, gy, ry, &mut g, &mut r);
        }

        let collect = |adj: &[Option<Tensor>]| {
            let mut flat = vec![0.0; self.layout.len()];
            for (leaf, node) in self.layout.leaves().iter().zip(&self.param_nodes) {
                if let Some(Some(t)) = adj.get(node.0) {
                    flat[leaf.range()].copy_from_slice(t.data());
                }
            }
            flat
        };
        let grad = collect(&g);
        let second = tangents.map(|_| collect(&r));
        (grad, second)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_node<'t>(
        &self,
        i: usize,
        values: &[Tensor],
        tan: impl Fn(NodeId) -> Option<&'t Tensor>,
        gy: Option<Tensor>,
        ry: Option<Tensor>,
        g: &mut [Option<Tensor>],
        r: &mut [Option<Tensor>],
    ) {
        let second = !r.is_empty();
        // Contributions that are linear in the adjoint apply identically to
        // ḡ and r̄.
        let linear = |dst: NodeId, f: &dyn Fn(&Tensor) -> Tensor, g: &mut [Option<Tensor>], r: &mut [Option<Tensor>]| {
            if let Some(a) = &gy {
                mat::accumulate(&mut g[dst.0], f(a));
            }
            if let Some(a) = &ry {
                mat::accumulate(&mut r[dst.0], f(a));
            }
        };
        match &self.nodes[i] {
            Op::Param(_) | Op::Input(_) | Op::Const(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&values[a.0], &values[b.0]);
                linear(*a, &|adj| mat::mm_nt(adj, bv), g, r);
                linear(*b, &|adj| mat::mm_tn(av, adj), g, r);
                if let (true, Some(gy)) = (second, &gy) {
                    if let Some(db) = tan(*b) {
                        mat::accumulate(&mut r[a.0], mat::mm_nt(gy, db));
                    }
                    if let Some(da) = tan(*a) {
                        mat::accumulate(&mut r[b.0], mat::mm_tn(da, gy));
                    }
                }
            }
            Op::Add(a, b) => {
                let bshape = values[b.0].shape().to_vec();
                linear(*a, &|adj| adj.clone(), g, r);
                linear(*b, &|adj| mat::reduce_to(adj.clone(), &bshape), g, r);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&values[a.0], &values[b.0]);
                let bshape = bv.shape().to_vec();
                linear(*a, &|adj| mat::hadamard(adj, bv), g, r);
                linear(*b, &|adj| mat::reduce_to(mat::hadamard(adj, av), &bshape), g, r);
                if let (true, Some(gy)) = (second, &gy) {
                    if let Some(db) = tan(*b) {
                        mat::accumulate(&mut r[a.0], mat::hadamard(gy, db));
                    }
                    if let Some(da) = tan(*a) {
                        let t = mat::reduce_to(mat::hadamard(gy, da), &bshape);
                        mat::accumulate(&mut r[b.0], t);
                    }
                }
            }
            Op::Tanh(a) => {
                let y = &values[i];
                linear(*a, &|adj| mat::zip_bcast(adj, y, |d, y| d * (1.0 - y * y)), g, r);
                if let (true, Some(gy), Some(dy)) = (second, &gy, tan(NodeId(i))) {
                    // d/dx of (1 − y²) ẋ along the tangent: −2y·ẏ
                    let t = mat::zip_bcast(&mat::hadamard(gy, y), dy, |gy_y, dy| -2.0 * gy_y * dy);
                    mat::accumulate(&mut r[a.0], t);
                }
            }
            Op::Sigmoid(a) => {
                let s = &values[i];
                linear(*a, &|adj| mat::zip_bcast(adj, s, |d, s| d * s * (1.0 - s)), g, r);
                if let (true, Some(gy), Some(ds)) = (second, &gy, tan(NodeId(i))) {
                    let t = mat::zip_bcast(&mat::zip_bcast(gy, s, |g, s| g * (1.0 - 2.0 * s)), ds, |x, d| x * d);
                    mat::accumulate(&mut r[a.0], t);
                }
            }
            Op::SliceCols { src, start, .. } => {
                let cols = dims(&values[src.0]).1;
                linear(*src, &|adj| mat::embed_cols(adj, cols, *start), g, r);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let len = dims(&values[p.0]).1;
                    linear(*p, &|adj| mat::slice_cols(adj, start, len), g, r);
                    start += len;
                }
            }
            Op::MeanRows(a) => {
                let m = dims(&values[a.0]).0;
                linear(*a, &|adj| mat::repeat_row(&adj.scale(1.0 / m as f64), m), g, r);
            }
            Op::Sum(a) => {
                let shape = values[a.0].shape().to_vec();
                linear(*a, &|adj| Tensor::filled(&shape, adj.data()[0]), g, r);
            }
            Op::Scale(a, c) => linear(*a, &|adj| adj.scale(*c), g, r),
            Op::Loss { kind, pred, target } => {
                let (z, y) = (&values[pred.0], &values[target.0]);
                let dz = loss_grad(*kind, z, y);
                linear(*pred, &|adj| dz.scale(adj.data()[0]), g, r);
                if let (true, Some(gy), Some(tz)) = (second, &gy, tan(*pred)) {
                    let m = dims(z).0 as f64;
                    let h = loss_output_hessian_rows(*kind, z, y, tz);
                    mat::accumulate(&mut r[pred.0], h.scale(gy.data()[0] / m));
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Batch-mean loss.
pub(crate) fn loss_value(kind: LossKind, z: &Tensor, y: &Tensor) -> f64 {
    let m = dims(z).0 as f64;
    let mut total = 0.0;
    match kind {
        LossKind::Mse => {
            for (zr, yr) in z.data().chunks_exact(dims(z).1).zip(y.data().chunks_exact(dims(y).1)) {
                let mut s = 0.0;
                for (a, b) in zr.iter().zip(yr) {
                    s += (a - b) * (a - b);
                }
                total += 0.5 * s;
            }
        }
        LossKind::SoftmaxCrossEntropy => {
            let lse = mat::logsumexp_rows(z);
            for (i, l) in lse.iter().enumerate() {
                let mut s = 0.0;
                for (zk, yk) in z.row(i).iter().zip(y.row(i)) {
                    s += yk * (l - zk);
                }
                total += s;
            }
        }
    }
    total / m
}

/// Gradient of the batch-mean loss with respect to the prediction.
pub(crate) fn loss_grad(kind: LossKind, z: &Tensor, y: &Tensor) -> Tensor {
    let m = dims(z).0 as f64;
    match kind {
        LossKind::Mse => mat::zip_bcast(z, y, |a, b| (a - b) / m),
        LossKind::SoftmaxCrossEntropy => {
            let p = mat::softmax_rows(z);
            let s = mat::row_sums(y);
            let n = dims(z).1;
            let mut out = Vec::with_capacity(z.len());
            for i in 0..dims(z).0 {
                out.extend(
                    p.row(i)
                        .iter()
                        .zip(y.row(i))
                        .map(|(&pk, &yk)| (pk * s[i] - yk) / m),
                );
            }
            Tensor::matrix(dims(z).0, n, out).expect("loss grad shape")
        }
    }
}

/// Per-sample `H_ℓ u` for every row (no batch averaging).
pub(crate) fn loss_output_hessian_rows(kind: LossKind, z: &Tensor, y: &Tensor, u: &Tensor) -> Tensor {
    match kind {
        LossKind::Mse => u.clone(),
        LossKind::SoftmaxCrossEntropy => {
            let p = mat::softmax_rows(z);
            mat::softmax_hessian_apply(&p, u, &mat::row_sums(y))
        }
    }
}

/// Public evaluation entry points.
impl Graph {
    /// Runs the forward pass and stores every node value in `ctx`.
    pub fn forward(&self, ctx: &mut EvalContext, feed: &[&Tensor], w: &[f64]) -> Result<()> {
        ctx.check(self)?;
        ctx.values = self.eval_values(feed, w)?;
        ctx.tangents.clear();
        Ok(())
    }

    /// Forward pass returning the value at `node`.
    pub fn evaluate(&self, ctx: &mut EvalContext, feed: &[&Tensor], w: &[f64], node: NodeId) -> Result<Tensor> {
        self.forward(ctx, feed, w)?;
        ctx.values
            .get(node.0)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("node {} does not exist", node.0)))
    }

    fn scalar_loss_node(&self, values: &[Tensor]) -> Result<NodeId> {
        let loss = self.loss.ok_or(Error::MissingNode("loss"))?;
        let v = &values[loss.0];
        if v.len() != 1 {
            return Err(Error::shape("loss", &[1, 1], v.shape()));
        }
        Ok(loss)
    }

    /// Scalar loss at `w`.
    pub fn loss_value(&self, ctx: &mut EvalContext, feed: &[&Tensor], w: &[f64]) -> Result<f64> {
        self.forward(ctx, feed, w)?;
        let loss = self.scalar_loss_node(&ctx.values)?;
        Ok(ctx.values[loss.0].data()[0])
    }

    /// Loss and its gradient in flattening order.
    pub fn loss_and_grad(&self, ctx: &mut EvalContext, feed: &[&Tensor], w: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.forward(ctx, feed, w)?;
        let loss = self.scalar_loss_node(&ctx.values)?;
        let (grad, _) = self.reverse(&ctx.values, None, loss, Tensor::scalar(1.0));
        Ok((ctx.values[loss.0].data()[0], grad))
    }

    /// `∇ℓ(w)`
    pub fn grad(&self, ctx: &mut EvalContext, feed: &[&Tensor], w: &[f64]) -> Result<Vec<f64>> {
        self.loss_and_grad(ctx, feed, w).map(|(_, g)| g)
    }

    /// Directional derivative `J v` of `node` (the graph output by default).
    pub fn jvp(
        &self,
        ctx: &mut EvalContext,
        feed: &[&Tensor],
        w: &[f64],
        v: &[f64],
        node: Option<NodeId>,
    ) -> Result<Tensor> {
        self.check_params("jvp direction", v)?;
        let node = match node.or(self.output) {
            Some(n) => n,
            None => return Err(Error::MissingNode("output")),
        };
        self.forward(ctx, feed, w)?;
        ctx.tangents = self.eval_tangents(&ctx.values, v);
        Ok(match &ctx.tangents[node.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(ctx.values[node.0].shape()),
        })
    }

    /// Hessian-vector product computed as `L{R_v{ℓ}}`.
    pub fn hvp(&self, ctx: &mut EvalContext, feed: &[&Tensor], w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_params("hvp direction", v)?;
        self.forward(ctx, feed, w)?;
        let loss = self.scalar_loss_node(&ctx.values)?;
        ctx.tangents = self.eval_tangents(&ctx.values, v);
        let (_, hv) = self.reverse(&ctx.values, Some(&ctx.tangents), loss, Tensor::scalar(1.0));
        Ok(hv.expect("second-order pass"))
    }

    /// Generalized Gauss-Newton product averaged over the bound batch.
    pub fn ggn_vp(&self, ctx: &mut EvalContext, feed: &[&Tensor], w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ctx.check(self)?;
        let op = crate::autodiff::GgnOperator::new(self, feed, w)?;
        op.apply(v)
    }
}
