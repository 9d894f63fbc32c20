//! Immutable computation graphs over a fixed primitive basis.
//!
//! All node values are rank-2. Input leaves have a fixed column count and a
//! batch-sized row count chosen when they are bound, so one graph serves any
//! batch size. Nodes are stored in construction order, which is a
//! topological order because operands must exist before they are used.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::params::{Init, ParamLayout};
use crate::tensor::Tensor;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-sample loss attached to a graph's output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `½‖z − y‖²`
    Mse,
    /// `−Σₖ yₖ log softmax(z)ₖ`
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::SoftmaxCrossEntropy => "softmax-ce",
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Param(usize),
    Input(usize),
    Const(Tensor),
    MatMul(NodeId, NodeId),
    /// `a + b`; `b` may be a single row broadcast over the rows of `a`.
    Add(NodeId, NodeId),
    /// `a ⊙ b` with the same broadcast rule as `Add`.
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SliceCols {
        src: NodeId,
        start: usize,
        len: usize,
    },
    ConcatCols(Vec<NodeId>),
    MeanRows(NodeId),
    Sum(NodeId),
    Scale(NodeId, f64),
    /// Batch mean of the per-sample loss.
    Loss {
        kind: LossKind,
        pred: NodeId,
        target: NodeId,
    },
}

#[derive(Clone, Debug)]
pub struct InputLeaf {
    pub name: String,
    pub cols: usize,
    pub node: NodeId,
}

/// Deliberate rule corruption used to prove the verification suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[doc(hidden)]
pub enum Fault {
    /// Tangent of `tanh` uses `1 − y` instead of `1 − y²`.
    TanhTangent,
}

#[derive(Clone, Debug)]
pub struct Graph {
    pub(crate) id: u64,
    pub(crate) nodes: Vec<Op>,
    pub(crate) layout: Arc<ParamLayout>,
    pub(crate) param_nodes: Vec<NodeId>,
    pub(crate) inputs: Vec<InputLeaf>,
    pub(crate) output: Option<NodeId>,
    pub(crate) loss: Option<NodeId>,
    pub(crate) fault: Option<Fault>,
}

impl Graph {
    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len()
    }

    pub fn inputs(&self) -> &[InputLeaf] {
        &self.inputs
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    pub fn loss(&self) -> Option<NodeId> {
        self.loss
    }

    pub fn loss_kind(&self) -> Option<LossKind> {
        match self.loss.map(|id| &self.nodes[id.0]) {
            Some(Op::Loss { kind, .. }) => Some(*kind),
            _ => None,
        }
    }

    /// `(kind, prediction, target)` when the loss node is a fused loss.
    pub(crate) fn fused_loss(&self) -> Option<(LossKind, NodeId, NodeId)> {
        match self.loss.map(|id| &self.nodes[id.0]) {
            Some(Op::Loss { kind, pred, target }) => Some((*kind, *pred, *target)),
            _ => None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }
}

/// Records primitives in topological order and freezes them into a [`Graph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Op>,
    layout: ParamLayout,
    param_nodes: Vec<NodeId>,
    inputs: Vec<InputLeaf>,
    output: Option<NodeId>,
    loss: Option<NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.nodes.push(op);
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<NodeId> {
        if id.0 < self.nodes.len() {
            Ok(id)
        } else {
            Err(Error::invalid(format!("node {} does not exist", id.0)))
        }
    }

    /// Registers a trainable leaf. Registration order is the flattening order.
    pub fn param(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<NodeId> {
        let leaf = self.layout.push(name, [rows, cols], init)?;
        let id = self.push(Op::Param(leaf));
        self.param_nodes.push(id);
        Ok(id)
    }

    /// A per-evaluation input with `cols` features and a batch of rows.
    pub fn input(&mut self, name: &str, cols: usize) -> Result<NodeId> {
        if cols == 0 {
            return Err(Error::invalid(format!("input `{name}` has zero columns")));
        }
        if self.inputs.iter().any(|i| i.name == name) {
            return Err(Error::invalid(format!("duplicate input name `{name}`")));
        }
        let id = self.push(Op::Input(self.inputs.len()));
        self.inputs.push(InputLeaf {
            name: name.to_string(),
            cols,
            node: id,
        });
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        let value = match value.shape().len() {
            2 => value,
            _ => {
                let (r, c) = (value.rows(), value.cols());
                value.reshape(vec![r, c])?
            }
        };
        Ok(self.push(Op::Const(value)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let op = Op::MatMul(self.check(a)?, self.check(b)?);
        Ok(self.push(op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let op = Op::Add(self.check(a)?, self.check(b)?);
        Ok(self.push(op))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let op = Op::Mul(self.check(a)?, self.check(b)?);
        Ok(self.push(op))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let op = Op::Tanh(self.check(a)?);
        Ok(self.push(op))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let op = Op::Sigmoid(self.check(a)?);
        Ok(self.push(op))
    }

    pub fn slice_cols(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if len == 0 {
            return Err(Error::invalid("empty column slice"));
        }
        let op = Op::SliceCols {
            src: self.check(src)?,
            start,
            len,
        };
        Ok(self.push(op))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::invalid("concat of zero parts"));
        }
        for &p in parts {
            self.check(p)?;
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec())))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let op = Op::MeanRows(self.check(a)?);
        Ok(self.push(op))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let op = Op::Sum(self.check(a)?);
        Ok(self.push(op))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let op = Op::Scale(self.check(a)?, c);
        Ok(self.push(op))
    }

    /// Attaches a fused loss. `pred` becomes the graph output; `target` must
    /// be an input or constant leaf since targets carry no derivatives.
    pub fn loss(&mut self, kind: LossKind, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.check(pred)?;
        self.check(target)?;
        if !matches!(self.nodes[target.0], Op::Input(_) | Op::Const(_)) {
            return Err(Error::invalid("loss target must be an input or constant"));
        }
        let id = self.push(Op::Loss { kind, pred, target });
        self.output = Some(pred);
        self.loss = Some(id);
        Ok(id)
    }

    /// Marks an arbitrary scalar node as the objective.
    pub fn set_loss(&mut self, node: NodeId) -> Result<()> {
        self.loss = Some(self.check(node)?);
        Ok(())
    }

    pub fn set_output(&mut self, node: NodeId) -> Result<()> {
        self.output = Some(self.check(node)?);
        Ok(())
    }

    pub fn build(self) -> Result<Graph> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("empty graph"));
        }
        Ok(Graph {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: self.nodes,
            layout: Arc::new(self.layout),
            param_nodes: self.param_nodes,
            inputs: self.inputs,
            output: self.output,
            loss: self.loss,
            fault: None,
        })
    }
}
