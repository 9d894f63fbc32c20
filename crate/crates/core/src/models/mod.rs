//! The two benchmark networks and their canonical parameter layouts.
//!
//! * Deep autoencoder: tanh encoder, mirrored decoder with untied weights,
//!   logistic output layer, MSE reconstruction loss.
//! * Stacked peephole LSTM unrolled over a fixed sequence length, with a
//!   fully-connected softmax head on the top layer's last hidden state.
//!
//! Both graphs take two inputs, `x` and `y`, bound per batch.

pub mod params;

use std::sync::Arc;

use crate::autodiff::{EvalContext, Graph, GraphBuilder, LossKind, NodeId};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use params::{Init, LeafSpec, ParamLayout, ParamVector};

pub const MODEL_PRESETS: &[(&str, &str)] = &[
    ("autoencoder-mnist", "tanh autoencoder 784-1000-500-250-30, mirrored decoder"),
    ("lstm3x10", "3-layer peephole LSTM, 10 hidden units, 49 scalar steps, 10 classes"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmSpec {
    pub layers: usize,
    pub hidden: usize,
    /// Features per time step.
    pub input_size: usize,
    /// Unrolled sequence length.
    pub steps: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelSpec {
    /// Encoder sizes from the input down to the code; the decoder mirrors them.
    Autoencoder { layers: Vec<usize> },
    StackedLstm(LstmSpec),
}

impl ModelSpec {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "autoencoder-mnist" => Ok(ModelSpec::Autoencoder {
                layers: vec![784, 1000, 500, 250, 30],
            }),
            "lstm3x10" => Ok(ModelSpec::StackedLstm(LstmSpec {
                layers: 3,
                hidden: 10,
                input_size: 1,
                steps: 49,
                classes: 10,
            })),
            other => Err(Error::UnknownName {
                kind: "model preset",
                name: other.to_string(),
                allowed: MODEL_PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", "),
            }),
        }
    }

    /// Width of one flattened input sample.
    pub fn input_width(&self) -> usize {
        match self {
            ModelSpec::Autoencoder { layers } => layers.first().copied().unwrap_or(0),
            ModelSpec::StackedLstm(s) => s.input_size * s.steps,
        }
    }

    pub fn target_width(&self) -> usize {
        match self {
            ModelSpec::Autoencoder { layers } => layers.first().copied().unwrap_or(0),
            ModelSpec::StackedLstm(s) => s.classes,
        }
    }
}

/// Builds the autoencoder graph: `x → tanh … tanh → (mirror) … tanh → σ`.
pub fn build_autoencoder(layers: &[usize]) -> Result<Graph> {
    if layers.len() < 2 {
        return Err(Error::invalid("autoencoder needs at least an input and a code size"));
    }
    if layers.contains(&0) {
        return Err(Error::invalid("autoencoder layer sizes must be positive"));
    }
    let d = layers[0];
    let mut g = GraphBuilder::new();
    let x = g.input("x", d)?;
    let y = g.input("y", d)?;

    let mut sizes: Vec<(String, usize, usize)> = Vec::new();
    for (i, pair) in layers.windows(2).enumerate() {
        sizes.push((format!("enc{i}"), pair[0], pair[1]));
    }
    let rev: Vec<usize> = layers.iter().rev().copied().collect();
    for (i, pair) in rev.windows(2).enumerate() {
        sizes.push((format!("dec{i}"), pair[0], pair[1]));
    }

    let last = sizes.len() - 1;
    let mut h = x;
    for (k, (name, fan_in, fan_out)) in sizes.into_iter().enumerate() {
        let w = g.param(&format!("{name}.w"), fan_in, fan_out, Init::Glorot { fan_in, fan_out })?;
        let b = g.param(&format!("{name}.b"), 1, fan_out, Init::Zeros)?;
        let a = g.matmul(h, w)?;
        let a = g.add(a, b)?;
        h = if k == last { g.sigmoid(a)? } else { g.tanh(a)? };
    }
    g.loss(LossKind::Mse, h, y)?;
    g.build()
}

struct LstmLayerParams {
    w_x: NodeId,
    w_h: NodeId,
    bias: NodeId,
    peep_i: NodeId,
    peep_f: NodeId,
    peep_o: NodeId,
}

/// Builds the stacked peephole LSTM, gates ordered `[i | f | c | o]`:
///
/// ```text
/// i = σ(W_xi x + W_hi h₋ + p_i ⊙ c₋ + b_i)
/// f = σ(W_xf x + W_hf h₋ + p_f ⊙ c₋ + b_f)
/// c = f ⊙ c₋ + i ⊙ tanh(W_xc x + W_hc h₋ + b_c)
/// o = σ(W_xo x + W_ho h₋ + p_o ⊙ c + b_o)
/// h = o ⊙ tanh(c)
/// ```
///
/// with zero initial state. Terms multiplying the zero initial state are
/// omitted from the graph at step 0.
pub fn build_stacked_lstm(spec: &LstmSpec) -> Result<Graph> {
    if spec.steps == 0 {
        return Err(Error::invalid("LSTM sequence length must be at least 1"));
    }
    if spec.layers == 0 || spec.hidden == 0 || spec.input_size == 0 || spec.classes == 0 {
        return Err(Error::invalid(format!("invalid LSTM spec {spec:?}")));
    }
    let hdim = spec.hidden;
    let mut g = GraphBuilder::new();
    let x = g.input("x", spec.input_size * spec.steps)?;
    let y = g.input("y", spec.classes)?;

    let mut seq: Vec<NodeId> = (0..spec.steps)
        .map(|t| g.slice_cols(x, t * spec.input_size, spec.input_size))
        .collect::<Result<_>>()?;
    let mut fan_in = spec.input_size;

    for layer in 1..=spec.layers {
        let name = |leaf: &str| format!("lstm{layer}.{leaf}");
        let w_x = g.param(&name("w_x"), fan_in, 4 * hdim, Init::Glorot { fan_in, fan_out: hdim })?;
        let w_h = g.param(&name("w_h"), hdim, 4 * hdim, Init::Glorot { fan_in: hdim, fan_out: hdim })?;
        let peep = g.param(&name("peep"), 1, 3 * hdim, Init::Zeros)?;
        let bias = g.param(&name("b"), 1, 4 * hdim, Init::LstmBias { hidden: hdim })?;
        let p = LstmLayerParams {
            w_x,
            w_h,
            bias,
            peep_i: g.slice_cols(peep, 0, hdim)?,
            peep_f: g.slice_cols(peep, hdim, hdim)?,
            peep_o: g.slice_cols(peep, 2 * hdim, hdim)?,
        };

        let mut state: Option<(NodeId, NodeId)> = None;
        let mut outputs = Vec::with_capacity(spec.steps);
        for &x_t in &seq {
            let (h, c) = lstm_cell(&mut g, &p, hdim, x_t, state)?;
            outputs.push(h);
            state = Some((h, c));
        }
        seq = outputs;
        fan_in = hdim;
    }

    let last = *seq.last().expect("steps >= 1");
    let head_w = g.param(
        "head.w",
        hdim,
        spec.classes,
        Init::Glorot { fan_in: hdim, fan_out: spec.classes },
    )?;
    let head_b = g.param("head.b", 1, spec.classes, Init::Zeros)?;
    let logits = g.matmul(last, head_w)?;
    let logits = g.add(logits, head_b)?;
    g.loss(LossKind::SoftmaxCrossEntropy, logits, y)?;
    g.build()
}

fn lstm_cell(
    g: &mut GraphBuilder,
    p: &LstmLayerParams,
    hdim: usize,
    x_t: NodeId,
    prev: Option<(NodeId, NodeId)>,
) -> Result<(NodeId, NodeId)> {
    let mut pre = g.matmul(x_t, p.w_x)?;
    if let Some((h_prev, _)) = prev {
        let rec = g.matmul(h_prev, p.w_h)?;
        pre = g.add(pre, rec)?;
    }
    let pre = g.add(pre, p.bias)?;
    let gate = |g: &mut GraphBuilder, k: usize| g.slice_cols(pre, k * hdim, hdim);
    let (mut i_pre, mut f_pre) = (gate(g, 0)?, gate(g, 1)?);
    let (c_pre, mut o_pre) = (gate(g, 2)?, gate(g, 3)?);

    if let Some((_, c_prev)) = prev {
        let pi = g.mul(c_prev, p.peep_i)?;
        i_pre = g.add(i_pre, pi)?;
        let pf = g.mul(c_prev, p.peep_f)?;
        f_pre = g.add(f_pre, pf)?;
    }
    let i = g.sigmoid(i_pre)?;
    let f = g.sigmoid(f_pre)?;
    let cand = g.tanh(c_pre)?;
    let mut c = g.mul(i, cand)?;
    if let Some((_, c_prev)) = prev {
        let keep = g.mul(f, c_prev)?;
        c = g.add(keep, c)?;
    }
    let po = g.mul(c, p.peep_o)?;
    o_pre = g.add(o_pre, po)?;
    let o = g.sigmoid(o_pre)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// A built network plus the spec it came from.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    graph: Graph,
}

impl Model {
    pub fn build(spec: ModelSpec) -> Result<Self> {
        let graph = match &spec {
            ModelSpec::Autoencoder { layers } => build_autoencoder(layers)?,
            ModelSpec::StackedLstm(s) => build_stacked_lstm(s)?,
        };
        Ok(Self { spec, graph })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        self.graph.layout()
    }

    pub fn param_count(&self) -> usize {
        self.graph.param_count()
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self.spec, ModelSpec::StackedLstm(_))
    }

    pub fn init_params(&self, rng: &mut Rng) -> ParamVector {
        ParamVector::initialize(self.layout().clone(), rng)
    }

    /// Network outputs (reconstructions or logits) for a batch.
    pub fn predict(&self, batch: &Batch, w: &[f64]) -> Result<Tensor> {
        let out = self.graph.output().ok_or(Error::MissingNode("output"))?;
        let mut ctx = EvalContext::new(&self.graph);
        self.graph.evaluate(&mut ctx, &batch.feed(), w, out)
    }
}

/// Mean per-sample loss over a batch.
pub fn batch_loss(graph: &Graph, batch: &Batch, w: &[f64]) -> Result<f64> {
    let mut ctx = EvalContext::new(graph);
    graph.loss_value(&mut ctx, &batch.feed(), w)
}
