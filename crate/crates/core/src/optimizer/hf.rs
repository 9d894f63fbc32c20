use rayon::prelude::*;

use crate::autodiff::{EvalContext, GgnOperator, Graph};
use crate::cg::{cg_solve, damp, CgConfig, CgResult, CgStop, LinearOperator};
use crate::data::{BatchPair, Dataset};
use crate::error::{Error, Result};
use crate::models::{Model, ParamVector};
use crate::optimizer::BlockPartition;
use crate::tensor::kernels;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HfConfig {
    /// Step size α applied to the assembled update.
    pub learning_rate: f64,
    /// Upper bound on outer updates.
    pub max_loops: usize,
    pub gradient_batch: usize,
    pub curvature_batch: usize,
    pub cg: CgConfig,
    /// Each block's CG starts from this multiple of its previous solution.
    pub warm_start_decay: f64,
    /// Solve blocks on the rayon pool. Results are bitwise identical to the
    /// serial path.
    pub parallel_blocks: bool,
}

impl Default for HfConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_loops: 100,
            gradient_batch: 512,
            curvature_batch: 64,
            cg: CgConfig::default(),
            warm_start_decay: 0.95,
            parallel_blocks: false,
        }
    }
}

impl HfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.gradient_batch == 0 || self.curvature_batch == 0 {
            return Err(Error::invalid("batch sizes must be positive"));
        }
        if self.curvature_batch > self.gradient_batch {
            return Err(Error::invalid(format!(
                "curvature batch {} exceeds gradient batch {}",
                self.curvature_batch, self.gradient_batch
            )));
        }
        if !(0.0..=1.0).contains(&self.warm_start_decay) {
            return Err(Error::invalid(format!(
                "warm-start decay {} outside [0, 1]",
                self.warm_start_decay
            )));
        }
        self.cg.validate()
    }
}

/// Restriction of the GGN to one block: `v_b ↦ [G·embed(v_b)]_b`.
pub struct BlockOperator<'a> {
    ggn: &'a GgnOperator<'a>,
    partition: &'a BlockPartition,
    block: usize,
}

pub fn make_block_operator<'a>(
    ggn: &'a GgnOperator<'a>,
    partition: &'a BlockPartition,
    block: usize,
) -> Result<BlockOperator<'a>> {
    if block >= partition.len() {
        return Err(Error::invalid(format!(
            "block {block} out of range for {} blocks",
            partition.len()
        )));
    }
    if partition.total() != ggn.dim() {
        return Err(Error::length("partition vs parameters", ggn.dim(), partition.total()));
    }
    Ok(BlockOperator { ggn, partition, block })
}

impl LinearOperator for BlockOperator<'_> {
    fn dim(&self) -> usize {
        self.partition.block_size(self.block)
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::length("block operator", self.dim(), v.len()));
        }
        let full = self.ggn.apply(&self.partition.embed(self.block, v))?;
        Ok(self.partition.gather(self.block, &full))
    }
}

/// Parameters plus the per-block CG solutions carried between updates.
#[derive(Clone, Debug)]
pub struct TrainerState {
    pub w: ParamVector,
    /// Raw (undecayed, unscaled) CG solution of each block from the last
    /// update.
    pub momentum: Vec<Vec<f64>>,
    pub updates: usize,
}

impl TrainerState {
    pub fn new(w: ParamVector, partition: &BlockPartition) -> Result<Self> {
        if w.len() != partition.total() {
            return Err(Error::length("trainer parameters", partition.total(), w.len()));
        }
        Ok(Self {
            w,
            momentum: (0..partition.len()).map(|b| vec![0.0; partition.block_size(b)]).collect(),
            updates: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub cg_iterations: usize,
    pub final_q: f64,
    pub stop: CgStop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Loss on `S_g` at the parameters before the update.
    pub loss: f64,
    pub grad_norm: f64,
    pub blocks: Vec<BlockReport>,
    /// The assembled full-length direction `Δw` (before scaling by α).
    pub direction: Vec<f64>,
}

/// One block-diagonal HF update from explicit gradient and curvature feeds.
pub fn block_hf_step_feeds(
    state: &mut TrainerState,
    graph: &Graph,
    partition: &BlockPartition,
    gradient_feed: &[&crate::tensor::Tensor],
    curvature_feed: &[&crate::tensor::Tensor],
    cfg: &HfConfig,
) -> Result<StepReport> {
    cfg.validate()?;
    if state.momentum.len() != partition.len() {
        return Err(Error::length("trainer blocks", partition.len(), state.momentum.len()));
    }
    let w = state.w.values();
    let mut ctx = EvalContext::new(graph);
    let (loss, g) = graph.loss_and_grad(&mut ctx, gradient_feed, w)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss = {loss}")));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient[{i}] = {}", g[i])));
    }
    let grad_norm = kernels::norm(&g);

    let ggn = GgnOperator::new(graph, curvature_feed, w)?;
    let solve = |b: usize| -> Result<CgResult> {
        let op = damp(make_block_operator(&ggn, partition, b)?, cfg.cg.damping)?;
        let g_b = partition.gather(b, &g);
        let x0: Vec<f64> = state.momentum[b].iter().map(|v| cfg.warm_start_decay * v).collect();
        cg_solve(&op, &g_b, &x0, &cfg.cg)
    };
    let results: Vec<Result<CgResult>> = if cfg.parallel_blocks {
        (0..partition.len()).into_par_iter().map(solve).collect()
    } else {
        (0..partition.len()).map(solve).collect()
    };

    let mut direction = vec![0.0; partition.total()];
    let mut blocks = Vec::with_capacity(partition.len());
    let mut solutions = Vec::with_capacity(partition.len());
    for (b, r) in results.into_iter().enumerate() {
        let r = r?;
        partition.scatter(b, &r.x, &mut direction);
        blocks.push(BlockReport {
            cg_iterations: r.iterations,
            final_q: r.final_q(),
            stop: r.stop,
        });
        solutions.push(r.x);
    }
    state.momentum = solutions;
    kernels::axpy(cfg.learning_rate, &direction, state.w.values_mut());
    state.updates += 1;
    Ok(StepReport {
        loss,
        grad_norm,
        blocks,
        direction,
    })
}

/// One block-diagonal HF update on a model, drawing `S_g` and `S_c` rows
/// from `data`.
pub fn block_hf_step(
    state: &mut TrainerState,
    model: &Model,
    partition: &BlockPartition,
    data: &Dataset,
    pair: &BatchPair,
    cfg: &HfConfig,
) -> Result<StepReport> {
    let gradient = data.gather(pair.gradient())?;
    let curvature = data.gather(pair.curvature())?;
    block_hf_step_feeds(state, model.graph(), partition, &gradient.feed(), &curvature.feed(), cfg)
}
