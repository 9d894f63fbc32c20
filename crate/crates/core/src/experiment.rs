//! Training loop and CSV metrics for one configured experiment.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use crate::autodiff::EvalContext;
use crate::config::{DataSource, ExperimentConfig, OptimizerKind};
use crate::data::{
    accuracy, load_mnist, one_hot, pool_images, sample_batches, synth_autoencoder_data,
    synth_sequence_classification, Dataset, MnistSplit, Split,
};
use crate::error::{Error, Result};
use crate::models::{batch_loss, Model, ModelSpec};
use crate::optimizer::{adam_step, block_hf_step, polyak_update, AdamState, BlockPartition, TrainerState};
use crate::rng::Rng;
use crate::tensor::{kernels, Tensor};

const MNIST_SIDE: usize = 28;
const SEQUENCE_SIDE: usize = 7;

/// One CSV row, written every `eval_every` updates.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub update: usize,
    pub epoch: usize,
    pub wall_seconds: f64,
    /// Loss over the whole training set at the current parameters.
    pub train_loss: f64,
    /// Loss over the evaluation set at the (possibly averaged) parameters.
    pub eval_loss: f64,
    pub eval_accuracy: Option<f64>,
    /// Norm of the most recent mini-batch gradient.
    pub grad_norm: f64,
    pub cg_iters: Vec<usize>,
    pub final_q: Vec<f64>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut fields = vec![
            self.update.to_string(),
            self.epoch.to_string(),
            self.wall_seconds.to_string(),
            self.train_loss.to_string(),
            self.eval_loss.to_string(),
            self.eval_accuracy.unwrap_or(f64::NAN).to_string(),
            self.grad_norm.to_string(),
        ];
        fields.extend(self.cg_iters.iter().map(|i| i.to_string()));
        fields.extend(self.final_q.iter().map(|q| q.to_string()));
        fields.join(",")
    }
}

pub fn csv_header(blocks: &[String]) -> String {
    let mut cols: Vec<String> = [
        "update",
        "epoch",
        "wall_seconds",
        "train_loss",
        "eval_loss",
        "eval_accuracy",
        "grad_norm",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(blocks.iter().map(|b| format!("cg_iters_{b}")));
    cols.extend(blocks.iter().map(|b| format!("q_{b}")));
    cols.join(",")
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub updates: usize,
    pub rows: Vec<MetricsRow>,
    pub stopped_early: bool,
    /// Parameters after the last update (not averaged).
    pub weights: Vec<f64>,
}

/// Training and evaluation sets for `cfg`, generated or loaded from disk.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let d = &cfg.data;
    match (&d.source, &cfg.model) {
        (DataSource::Synthetic, ModelSpec::Autoencoder { layers }) => {
            let dim = layers[0];
            let all = synth_autoencoder_data(d.train_samples + d.eval_samples, dim, d.rank.min(dim), d.seed)?;
            let (train, eval) = all.split_at(d.train_samples)?;
            Ok((train, eval.with_split(Split::Test)))
        }
        (DataSource::Synthetic, ModelSpec::StackedLstm(s)) => {
            let all = synth_sequence_classification(
                d.train_samples + d.eval_samples,
                s.classes,
                SEQUENCE_SIDE,
                d.noise,
                d.seed,
            )?;
            let (train, eval) = all.split_at(d.train_samples)?;
            Ok((train, eval.with_split(Split::Test)))
        }
        (DataSource::Mnist { dir }, spec) => {
            let load = |split: MnistSplit, n: usize, tag: Split| -> Result<Dataset> {
                let (images, labels) = load_mnist(dir, split, Some(n))?;
                match spec {
                    ModelSpec::Autoencoder { layers } => {
                        let x = mnist_pixels(&images, layers[0])?;
                        Dataset::autoencoding(x, tag)
                    }
                    ModelSpec::StackedLstm(s) => {
                        let x = pool_images(&images, MNIST_SIDE / SEQUENCE_SIDE)?;
                        Dataset::new(x, one_hot(&labels, s.classes)?, tag)
                    }
                }
            };
            Ok((
                load(MnistSplit::Train, d.train_samples, Split::Train)?,
                load(MnistSplit::Test, d.eval_samples, Split::Test)?,
            ))
        }
    }
}

/// Flattens `[n × 28 × 28]` images, average-pooling down to `width` pixels
/// when `width` is a smaller square that tiles 28.
fn mnist_pixels(images: &Tensor, width: usize) -> Result<Tensor> {
    let side = (width as f64).sqrt().round() as usize;
    if side * side != width || side == 0 || !MNIST_SIDE.is_multiple_of(side) {
        return Err(Error::invalid(format!(
            "autoencoder input width {width} does not match MNIST (784, or a pooled square such as 196 or 49)"
        )));
    }
    pool_images(images, MNIST_SIDE / side)
}

/// A prepared run: model, data and (for HF variants) the block partition.
pub struct Experiment {
    cfg: ExperimentConfig,
    model: Model,
    partition: BlockPartition,
    train: Dataset,
    eval: Dataset,
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let (train, eval) = load_datasets(cfg)?;
        Self::with_data(cfg, train, eval)
    }

    pub fn with_data(cfg: &ExperimentConfig, train: Dataset, eval: Dataset) -> Result<Self> {
        let model = Model::build(cfg.model.clone())?;
        let width = model.spec().input_width();
        for d in [&train, &eval] {
            if d.inputs().cols() != width || d.targets().cols() != model.spec().target_width() {
                return Err(Error::invalid(format!(
                    "dataset of shape {:?} -> {:?} does not fit the model ({} -> {})",
                    d.inputs().shape(),
                    d.targets().shape(),
                    width,
                    model.spec().target_width()
                )));
            }
        }
        if cfg.hf.gradient_batch > train.len() {
            return Err(Error::invalid(format!(
                "gradient batch {} exceeds the {} training samples",
                cfg.hf.gradient_batch,
                train.len()
            )));
        }
        let partition = BlockPartition::preset(&cfg.partition, model.layout())?;
        Ok(Self {
            cfg: cfg.clone(),
            model,
            partition,
            train,
            eval,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn eval_set(&self) -> &Dataset {
        &self.eval
    }

    /// Block names that get CG columns; empty for Adam.
    pub fn block_names(&self) -> Vec<String> {
        match self.cfg.optimizer {
            OptimizerKind::Adam => Vec::new(),
            _ => self.partition.blocks().iter().map(|b| b.name.clone()).collect(),
        }
    }

    fn evaluate(&self, w: &[f64], eval_w: &[f64]) -> Result<(f64, f64, Option<f64>)> {
        let train_loss = batch_loss(self.model.graph(), &self.train.full_batch(), w)?;
        let eval_batch = self.eval.full_batch();
        let eval_loss = batch_loss(self.model.graph(), &eval_batch, eval_w)?;
        if !train_loss.is_finite() || !eval_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "train loss {train_loss}, eval loss {eval_loss}"
            )));
        }
        let acc = if self.model.is_classifier() {
            let out = self.model.predict(&eval_batch, eval_w)?;
            Some(accuracy(&out, &eval_batch.targets))
        } else {
            None
        };
        Ok((train_loss, eval_loss, acc))
    }

    /// Runs the training loop, handing each metrics row to `on_row` as soon
    /// as it is computed.
    pub fn run(&self, mut on_row: impl FnMut(&MetricsRow) -> Result<()>) -> Result<RunSummary> {
        let cfg = &self.cfg;
        let start = Instant::now();
        let mut rng = Rng::new(cfg.seed);
        let w0 = self.model.init_params(&mut rng);
        let mut sampler = sample_batches(
            self.train.len(),
            cfg.hf.gradient_batch,
            cfg.hf.curvature_batch,
            rng.fork(),
        )?;
        let mut state = TrainerState::new(w0, &self.partition)?;
        let mut adam = AdamState::new(state.w.len());
        let mut average = (cfg.polyak_decay > 0.0).then(|| vec![0.0; state.w.len()]);
        let blocks = self.block_names().len();

        let mut rows = Vec::new();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        let mut stopped_early = false;
        let mut cg_iters = vec![0; blocks];
        let mut final_q = vec![0.0; blocks];

        for update in 1..=cfg.hf.max_loops {
            let pair = sampler.next().expect("sampler is endless");
            let grad_norm = match cfg.optimizer {
                OptimizerKind::Adam => {
                    let batch = self.train.gather(pair.gradient())?;
                    let mut ctx = EvalContext::new(self.model.graph());
                    let (loss, g) = self.model.graph().loss_and_grad(&mut ctx, &batch.feed(), state.w.values())?;
                    if !loss.is_finite() {
                        return Err(Error::NonFinite(format!("loss = {loss} at update {update}")));
                    }
                    adam_step(&mut adam, state.w.values_mut(), &g, &cfg.adam)?;
                    kernels::norm(&g)
                }
                OptimizerKind::BlockHf | OptimizerKind::Hf => {
                    let report = block_hf_step(&mut state, &self.model, &self.partition, &self.train, &pair, &cfg.hf)?;
                    for (b, r) in report.blocks.iter().enumerate() {
                        cg_iters[b] = r.cg_iterations;
                        final_q[b] = r.final_q;
                    }
                    report.grad_norm
                }
            };
            if let Some(avg) = average.as_mut() {
                polyak_update(avg, state.w.values(), cfg.polyak_decay)?;
            }
            if update % cfg.eval_every != 0 && update != cfg.hf.max_loops {
                continue;
            }
            // The average starts at zero; dividing by 1 − decayᵗ removes that bias.
            let debiased: Option<Vec<f64>> = average.as_ref().map(|avg| {
                let mass = 1.0 - cfg.polyak_decay.powi(update as i32);
                avg.iter().map(|a| a / mass).collect()
            });
            let eval_w = debiased.as_deref().unwrap_or(state.w.values());
            let (train_loss, eval_loss, eval_accuracy) = self.evaluate(state.w.values(), eval_w)?;
            let row = MetricsRow {
                update,
                epoch: sampler.epoch(),
                wall_seconds: if cfg.wall_clock { start.elapsed().as_secs_f64() } else { 0.0 },
                train_loss,
                eval_loss,
                eval_accuracy,
                grad_norm,
                cg_iters: cg_iters.clone(),
                final_q: final_q.clone(),
            };
            on_row(&row)?;
            rows.push(row);
            if eval_loss < best {
                best = eval_loss;
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
        Ok(RunSummary {
            updates: state.updates.max(adam.t as usize),
            rows,
            stopped_early,
            weights: state.w.values().to_vec(),
        })
    }
}

/// Prepares the experiment and streams its metrics to `cfg.output`. Rows
/// already written stay on disk if the run aborts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let exp = Experiment::prepare(cfg)?;
    if let Some(parent) = cfg.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(&cfg.output)?);
    writeln!(out, "{}", csv_header(&exp.block_names()))?;
    out.flush()?;
    let result = exp.run(|row| {
        writeln!(out, "{}", row.to_csv())?;
        out.flush()?;
        Ok(())
    });
    out.flush()?;
    result
}
