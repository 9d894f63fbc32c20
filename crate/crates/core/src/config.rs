//! Experiment configuration: flat `key = value` text with `#` comments and
//! `[model]`, `[optimizer]`, `[data]`, `[run]` sections.
//!
//! A key written inside a section is qualified with the section name unless
//! it already contains a dot, so `seed` under `[run]` is `run.seed` while
//! `hf.damping` under `[optimizer]` stays `hf.damping`. Unknown keys,
//! duplicate keys and unparsable values are errors that name the line.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::cg::{CgConfig, StopCriterion};
use crate::data::SequenceMode;
use crate::error::{Error, Result};
use crate::models::{LstmSpec, ModelSpec};
use crate::optimizer::{AdamConfig, HfConfig, PARTITION_PRESETS};

const SECTIONS: &[&str] = &["model", "optimizer", "data", "run"];

/// Every accepted key with a one-line description, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("model.preset", "autoencoder-mnist | lstm3x10 (required)"),
    ("model.layers", "autoencoder encoder sizes, comma separated, e.g. 64,32,16,8"),
    ("model.lstm_layers", "number of stacked LSTM layers"),
    ("model.hidden", "LSTM hidden units per layer"),
    ("optimizer.kind", "block-hf | hf | adam (required)"),
    ("optimizer.partition", "partition preset for block-hf (default depends on the model)"),
    ("optimizer.polyak_decay", "Polyak decay for evaluation parameters, 0 disables (default 0)"),
    ("hf.learning_rate", "step size alpha (default 0.1)"),
    ("hf.damping", "Tikhonov damping d (default 0)"),
    ("hf.max_cg_iters", "CG iteration cap per block (default 30)"),
    ("hf.cg_stop", "residual | progress (default residual)"),
    ("hf.cg_tol", "tolerance of the stop criterion (default 1e-4)"),
    ("hf.cg_window", "minimum window of the progress criterion (default 10)"),
    ("hf.warm_start_decay", "CG warm-start scale (default 0.95)"),
    ("hf.gradient_batch", "|S_g|, also Adam's batch size (default 512)"),
    ("hf.curvature_batch", "|S_c| (default min(64, |S_g|))"),
    ("hf.parallel_blocks", "solve blocks concurrently (default false)"),
    ("adam.learning_rate", "default 0.001"),
    ("adam.beta1", "default 0.9"),
    ("adam.beta2", "default 0.999"),
    ("adam.epsilon", "default 1e-8"),
    ("data.source", "synthetic | mnist (required)"),
    ("data.dir", "directory with the MNIST IDX files (mnist only)"),
    ("data.train_samples", "training rows (default 2000)"),
    ("data.eval_samples", "evaluation rows (default 500)"),
    ("data.rank", "latent rank of synthetic autoencoder data (default 8)"),
    ("data.noise", "pixel noise of synthetic sequences (default 0.3)"),
    ("data.sequence", "pixels | rows (default pixels)"),
    ("data.seed", "seed of the synthetic generator (default: run.seed)"),
    ("run.seed", "seed for initialisation and batch sampling (required)"),
    ("run.max_loops", "number of parameter updates (default 100)"),
    ("run.eval_every", "updates between CSV rows (default 10)"),
    ("run.patience", "evaluations without improvement before stopping, 0 disables (default 10)"),
    ("run.output", "CSV path (required)"),
    ("run.wall_clock", "record elapsed seconds; false writes 0 for byte-identical output (default true)"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    BlockHf,
    Hf,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block-hf" => Ok(Self::BlockHf),
            "hf" => Ok(Self::Hf),
            "adam" => Ok(Self::Adam),
            other => Err(Error::UnknownName {
                kind: "optimizer",
                name: other.into(),
                allowed: "block-hf, hf, adam".into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Mnist { dir: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub rank: usize,
    pub noise: f64,
    pub sequence: SequenceMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub optimizer: OptimizerKind,
    /// Resolved partition preset; always `single` for plain HF.
    pub partition: String,
    /// `hf.max_loops` doubles as the update budget for Adam.
    pub hf: HfConfig,
    pub adam: AdamConfig,
    pub polyak_decay: f64,
    pub data: DataConfig,
    pub seed: u64,
    pub eval_every: usize,
    pub patience: usize,
    pub output: PathBuf,
    pub wall_clock: bool,
}

struct Entry {
    line: usize,
    value: String,
}

struct Table {
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| Error::Config {
                line: e.line,
                message: format!("`{key}`: cannot parse `{}`: {err}", e.value),
            }),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::MissingKey(key.into()))
    }

    /// Re-labels a semantic error with the line of `key`.
    fn at(&self, key: &str, err: Error) -> Error {
        match self.entries.get(key) {
            Some(e) => Error::Config {
                line: e.line,
                message: format!("`{key}`: {err}"),
            },
            None => err,
        }
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }
}

fn tokenize(text: &str) -> Result<Table> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').map(str::trim).ok_or_else(|| Error::Config {
                line,
                message: format!("malformed section header `{content}`"),
            })?;
            if !SECTIONS.contains(&name) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown section `[{name}]` (allowed: {})", SECTIONS.join(", ")),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Config {
                line,
                message: "empty key".into(),
            });
        }
        let full = match &section {
            Some(s) if !key.contains('.') => format!("{s}.{key}"),
            _ => key.to_string(),
        };
        if !KEYS.iter().any(|(k, _)| *k == full) {
            return Err(Error::Config {
                line,
                message: format!("unknown key `{full}`"),
            });
        }
        if let Some(prev) = entries.get(&full) {
            let prev: &Entry = prev;
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{full}` (first set on line {})", prev.line),
            });
        }
        entries.insert(
            full,
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(Table { entries })
}

fn parse_list(t: &Table, key: &str) -> Result<Option<Vec<usize>>> {
    let Some(e) = t.raw(key) else { return Ok(None) };
    e.value
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Some)
        .map_err(|err| Error::Config {
            line: e.line,
            message: format!("`{key}`: expected comma-separated sizes, got `{}`: {err}", e.value),
        })
}

fn model_spec(t: &Table, sequence: SequenceMode) -> Result<ModelSpec> {
    let preset: String = t.required("model.preset")?;
    let mut spec = ModelSpec::preset(&preset).map_err(|e| t.at("model.preset", e))?;
    match &mut spec {
        ModelSpec::Autoencoder { layers } => {
            for key in ["model.lstm_layers", "model.hidden"] {
                if t.raw(key).is_some() {
                    return Err(Error::Config {
                        line: t.line(key),
                        message: format!("`{key}` does not apply to an autoencoder"),
                    });
                }
            }
            if let Some(sizes) = parse_list(t, "model.layers")? {
                if sizes.len() < 2 || sizes.contains(&0) {
                    return Err(Error::Config {
                        line: t.line("model.layers"),
                        message: "need at least two positive layer sizes".into(),
                    });
                }
                *layers = sizes;
            }
        }
        ModelSpec::StackedLstm(s) => {
            if t.raw("model.layers").is_some() {
                return Err(Error::Config {
                    line: t.line("model.layers"),
                    message: "`model.layers` applies to autoencoders; use `model.lstm_layers`".into(),
                });
            }
            s.layers = t.or("model.lstm_layers", s.layers)?;
            s.hidden = t.or("model.hidden", s.hidden)?;
            if s.layers == 0 || s.hidden == 0 {
                return Err(Error::Config {
                    line: t.line("model.lstm_layers").max(t.line("model.hidden")),
                    message: "LSTM layers and hidden size must be positive".into(),
                });
            }
            let side = 7;
            let (steps, features) = sequence.shape(side);
            *s = LstmSpec {
                steps,
                input_size: features,
                ..s.clone()
            };
        }
    }
    Ok(spec)
}

fn positive(t: &Table, key: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Config {
            line: t.line(key),
            message: format!("`{key}` must be positive, got {value}"),
        })
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let t = tokenize(text)?;

    let sequence: SequenceMode = t.or("data.sequence", SequenceMode::Pixels)?;
    let model = model_spec(&t, sequence)?;
    let optimizer: OptimizerKind = t.required("optimizer.kind")?;

    let default_partition = match (&model, optimizer) {
        (_, OptimizerKind::Hf) => "single",
        (ModelSpec::Autoencoder { .. }, _) => "autoencoder-2block",
        (ModelSpec::StackedLstm(_), _) => "lstm-3block",
    };
    let partition: String = t.or("optimizer.partition", default_partition.to_string())?;
    if !PARTITION_PRESETS.iter().any(|(p, _)| *p == partition) {
        return Err(t.at(
            "optimizer.partition",
            Error::UnknownName {
                kind: "partition preset",
                name: partition,
                allowed: PARTITION_PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", "),
            },
        ));
    }
    if optimizer == OptimizerKind::Hf && partition != "single" {
        return Err(Error::Config {
            line: t.line("optimizer.partition"),
            message: "plain `hf` always uses the `single` partition; use `block-hf` for blocks".into(),
        });
    }

    let polyak_decay: f64 = t.or("optimizer.polyak_decay", 0.0)?;
    if !(0.0..1.0).contains(&polyak_decay) {
        return Err(Error::Config {
            line: t.line("optimizer.polyak_decay"),
            message: format!("`optimizer.polyak_decay` must lie in [0, 1), got {polyak_decay}"),
        });
    }

    let stop = match t.or("hf.cg_stop", "residual".to_string())?.as_str() {
        "residual" => StopCriterion::RelativeResidual {
            tol: t.or("hf.cg_tol", 1e-4)?,
        },
        "progress" => StopCriterion::QuadraticProgress {
            min_window: t.or("hf.cg_window", 10)?,
            tol: t.or("hf.cg_tol", 5e-4)?,
        },
        other => {
            return Err(t.at(
                "hf.cg_stop",
                Error::UnknownName {
                    kind: "CG stop criterion",
                    name: other.into(),
                    allowed: "residual, progress".into(),
                },
            ))
        }
    };
    let gradient_batch = t.or("hf.gradient_batch", 512)?;
    let hf = HfConfig {
        learning_rate: t.or("hf.learning_rate", 0.1)?,
        max_loops: t.or("run.max_loops", 100)?,
        gradient_batch,
        curvature_batch: t.or("hf.curvature_batch", gradient_batch.min(64))?,
        cg: CgConfig {
            max_iters: t.or("hf.max_cg_iters", 30)?,
            stop,
            damping: t.or("hf.damping", 0.0)?,
        },
        warm_start_decay: t.or("hf.warm_start_decay", 0.95)?,
        parallel_blocks: t.or("hf.parallel_blocks", false)?,
    };
    if hf.curvature_batch > hf.gradient_batch {
        return Err(Error::Config {
            line: t.line("hf.curvature_batch").max(t.line("hf.gradient_batch")),
            message: format!(
                "curvature batch {} exceeds gradient batch {}",
                hf.curvature_batch, hf.gradient_batch
            ),
        });
    }
    hf.validate().map_err(|e| Error::Config {
        line: 0,
        message: e.to_string(),
    })?;

    let adam = AdamConfig {
        learning_rate: positive(&t, "adam.learning_rate", t.or("adam.learning_rate", 0.001)?)?,
        beta1: t.or("adam.beta1", 0.9)?,
        beta2: t.or("adam.beta2", 0.999)?,
        epsilon: positive(&t, "adam.epsilon", t.or("adam.epsilon", 1e-8)?)?,
    };
    adam.validate().map_err(|e| Error::Config {
        line: t.line("adam.beta1").max(t.line("adam.beta2")),
        message: e.to_string(),
    })?;

    let seed: u64 = t.required("run.seed")?;
    let source = match t.required::<String>("data.source")?.as_str() {
        "synthetic" => {
            if t.raw("data.dir").is_some() {
                return Err(Error::Config {
                    line: t.line("data.dir"),
                    message: "`data.dir` is only used with `data.source = mnist`".into(),
                });
            }
            DataSource::Synthetic
        }
        "mnist" => DataSource::Mnist {
            dir: t.required::<String>("data.dir")?.into(),
        },
        other => {
            return Err(t.at(
                "data.source",
                Error::UnknownName {
                    kind: "data source",
                    name: other.into(),
                    allowed: "synthetic, mnist".into(),
                },
            ))
        }
    };
    let data = DataConfig {
        source,
        train_samples: t.or("data.train_samples", 2000)?,
        eval_samples: t.or("data.eval_samples", 500)?,
        rank: t.or("data.rank", 8)?,
        noise: t.or("data.noise", 0.3)?,
        sequence,
        seed: t.or("data.seed", seed)?,
    };
    if data.train_samples == 0 || data.eval_samples == 0 {
        return Err(Error::Config {
            line: t.line("data.train_samples").max(t.line("data.eval_samples")),
            message: "sample counts must be positive".into(),
        });
    }
    if hf.gradient_batch > data.train_samples {
        return Err(Error::Config {
            line: t.line("hf.gradient_batch"),
            message: format!(
                "gradient batch {} exceeds the {} training samples",
                hf.gradient_batch, data.train_samples
            ),
        });
    }

    let eval_every: usize = t.or("run.eval_every", 10)?;
    if eval_every == 0 {
        return Err(Error::Config {
            line: t.line("run.eval_every"),
            message: "`run.eval_every` must be at least 1".into(),
        });
    }
    Ok(ExperimentConfig {
        model,
        optimizer,
        partition,
        hf,
        adam,
        polyak_decay,
        data,
        seed,
        eval_every,
        patience: t.or("run.patience", 10)?,
        output: t.required::<String>("run.output")?.into(),
        wall_clock: t.or("run.wall_clock", true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[model]
preset = autoencoder-mnist
layers = 64, 32, 16, 8

[optimizer]
kind = block-hf

[data]
source = synthetic

[run]
seed = 7
output = out.csv
";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.model, ModelSpec::Autoencoder { layers: vec![64, 32, 16, 8] });
        assert_eq!(c.optimizer, OptimizerKind::BlockHf);
        assert_eq!(c.partition, "autoencoder-2block");
        assert_eq!(c.hf, HfConfig::default());
        assert_eq!(c.adam, AdamConfig::default());
        assert_eq!(c.seed, 7);
        assert_eq!(c.data.seed, 7);
        assert_eq!(c.patience, 10);
        assert!(c.wall_clock);
    }

    #[test]
    fn unknown_optimizer_names_key_and_choices() {
        let text = MINIMAL.replace("kind = block-hf", "kind = adamm");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("adamm") && msg.contains("block-hf, hf, adam"), "{msg}");
    }

    #[test]
    fn curvature_batch_above_gradient_batch_rejected() {
        let text = MINIMAL.replace(
            "kind = block-hf",
            "kind = block-hf\nhf.curvature_batch = 128\nhf.gradient_batch = 64",
        );
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, Error::Config { line: 8, .. }), "{err}");
        let small = MINIMAL.replace("kind = block-hf", "kind = adam\nhf.gradient_batch = 30");
        assert_eq!(parse_config(&small).unwrap().hf.curvature_batch, 30);
    }

    #[test]
    fn unknown_key_names_line() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nsede = 8");
        match parse_config(&text).unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, 13);
                assert!(message.contains("run.sede"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = MINIMAL.replace("seed = 7\n", "");
        assert!(matches!(parse_config(&text), Err(Error::MissingKey(k)) if k == "run.seed"));
    }

    #[test]
    fn type_errors_name_line() {
        let text = MINIMAL.replace("seed = 7", "seed = seven");
        assert!(matches!(parse_config(&text), Err(Error::Config { line: 12, .. })));
        let text = MINIMAL.replace("layers = 64, 32, 16, 8", "layers = 64, x");
        assert!(matches!(parse_config(&text), Err(Error::Config { line: 3, .. })));
    }

    #[test]
    fn lstm_sequence_mode_shapes_model() {
        let text = "\
[model]
preset = lstm3x10
[optimizer]
kind = block-hf
hf.damping = 0.01
hf.max_cg_iters = 100
[data]
source = synthetic
sequence = rows
[run]
seed = 1
output = o.csv
";
        let c = parse_config(text).unwrap();
        match c.model {
            ModelSpec::StackedLstm(s) => assert_eq!((s.steps, s.input_size), (7, 7)),
            _ => panic!(),
        }
        assert_eq!(c.partition, "lstm-3block");
        assert_eq!(c.hf.cg.damping, 0.01);
        assert_eq!(c.hf.cg.max_iters, 100);
    }

    #[test]
    fn duplicates_and_stray_sections_rejected() {
        assert!(parse_config(&format!("{MINIMAL}seed = 3\n")).is_err());
        assert!(parse_config(&format!("{MINIMAL}[extra]\n")).is_err());
        assert!(parse_config(&MINIMAL.replace("kind = block-hf", "kind = hf\npartition = autoencoder-2block")).is_err());
    }

    #[test]
    fn comments_and_dotted_keys() {
        let text = MINIMAL.replace("kind = block-hf", "kind = block-hf  # the method\nhf.parallel_blocks = true");
        assert!(parse_config(&text).unwrap().hf.parallel_blocks);
    }

    #[test]
    fn mnist_requires_dir() {
        let text = MINIMAL.replace("source = synthetic", "source = mnist");
        assert!(matches!(parse_config(&text), Err(Error::MissingKey(k)) if k == "data.dir"));
    }
}
