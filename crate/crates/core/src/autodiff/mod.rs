//! Computation graphs with forward values, reverse-mode gradients,
//! forward-mode directional derivatives and the two curvature-vector
//! products built from them: the Hessian product `L{R_v{ℓ}}` and the
//! generalized Gauss-Newton product `Jᵀ H_ℓ J v`.

mod eval;
mod graph;
mod mat;

pub use eval::EvalContext;
pub use graph::{Fault, Graph, GraphBuilder, InputLeaf, LossKind, NodeId};

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "softmax-ce" | "softmax_cross_entropy" => Ok(LossKind::SoftmaxCrossEntropy),
            other => Err(Error::UnknownName {
                kind: "loss kind",
                name: other.to_string(),
                allowed: "mse, softmax-ce".into(),
            }),
        }
    }
}

/// `H_ℓ u` for the per-sample loss, where `H_ℓ` is the Hessian of the loss
/// with respect to the network output. Rows are independent samples; a
/// rank-1 argument is treated as one sample.
///
/// For MSE (`½‖z − y‖²`) `H_ℓ = I`. For softmax cross-entropy
/// `H_ℓ = diag(p) − ppᵀ` with `p = softmax(z)`, scaled by the target mass
/// (1 for one-hot targets).
pub fn loss_output_hessian_apply(kind: LossKind, z: &Tensor, y: &Tensor, u: &Tensor) -> Result<Tensor> {
    if z.shape() != y.shape() {
        return Err(Error::shape("loss_output_hessian_apply", z.shape(), y.shape()));
    }
    if z.shape() != u.shape() {
        return Err(Error::shape("loss_output_hessian_apply", z.shape(), u.shape()));
    }
    let as_rows = |t: &Tensor| t.clone().reshape(vec![t.rows(), t.cols()]);
    let out = eval::loss_output_hessian_rows(kind, &as_rows(z)?, &as_rows(y)?, &as_rows(u)?);
    out.reshape(u.shape().to_vec())
}

/// Matrix-free Gauss-Newton operator `v ↦ (1/|S|) Σ Jᵀ H_ℓ J v` at a fixed
/// parameter vector and batch.
///
/// The forward values are computed once; each [`apply`](Self::apply) runs one
/// tangent pass and one reverse pass with private buffers, so a single
/// operator can be applied from several threads at once.
pub struct GgnOperator<'g> {
    graph: &'g Graph,
    values: Vec<Tensor>,
    kind: LossKind,
    pred: NodeId,
    target: NodeId,
}

impl<'g> GgnOperator<'g> {
    pub fn new(graph: &'g Graph, feed: &[&Tensor], w: &[f64]) -> Result<Self> {
        let (kind, pred, target) = graph.fused_loss().ok_or(Error::MissingNode("fused loss"))?;
        let values = graph.eval_values(feed, w)?;
        Ok(Self {
            graph,
            values,
            kind,
            pred,
            target,
        })
    }

    pub fn dim(&self) -> usize {
        self.graph.param_count()
    }

    pub fn loss_kind(&self) -> LossKind {
        self.kind
    }

    /// Number of samples the curvature is averaged over.
    pub fn batch_size(&self) -> usize {
        self.values[self.pred.0].rows()
    }

    pub fn loss(&self) -> f64 {
        self.graph
            .loss()
            .map(|l| self.values[l.0].data()[0])
            .unwrap_or(f64::NAN)
    }

    pub fn output(&self) -> &Tensor {
        &self.values[self.pred.0]
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.graph.check_params("ggn_vp direction", v)?;
        let tangents = self.graph.eval_tangents(&self.values, v);
        let Some(jv) = &tangents[self.pred.0] else {
            return Ok(vec![0.0; v.len()]);
        };
        let z = &self.values[self.pred.0];
        let y = &self.values[self.target.0];
        let m = z.rows() as f64;
        let cotangent = eval::loss_output_hessian_rows(self.kind, z, y, jv).scale(1.0 / m);
        let (gv, _) = self.graph.reverse(&self.values, None, self.pred, cotangent);
        Ok(gv)
    }
}

impl crate::cg::LinearOperator for GgnOperator<'_> {
    fn dim(&self) -> usize {
        GgnOperator::dim(self)
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        GgnOperator::apply(self, v)
    }
}
