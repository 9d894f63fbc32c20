//! End-to-end training: trainability, CSV schema, determinism and aborts.

use std::fs;

use blockhf::autodiff::EvalContext;
use blockhf::cg::{CgConfig, StopCriterion};
use blockhf::config::parse_config;
use blockhf::data::{synth_autoencoder_data, Dataset, Split};
use blockhf::experiment::{csv_header, run_experiment, Experiment};
use blockhf::models::{Model, ModelSpec};
use blockhf::optimizer::{block_hf_step_feeds, BlockPartition, HfConfig, TrainerState};
use blockhf::rng::Rng;
use blockhf::Error;

#[test]
fn square_autoencoder_fits_ten_samples() {
    let model = Model::build(ModelSpec::Autoencoder { layers: vec![6, 6] }).unwrap();
    let data = synth_autoencoder_data(10, 6, 6, 3).unwrap();
    let batch = data.full_batch();
    let partition = BlockPartition::single(model.layout());
    let mut state = TrainerState::new(model.init_params(&mut Rng::new(1)), &partition).unwrap();
    let cfg = HfConfig {
        learning_rate: 0.5,
        gradient_batch: 10,
        curvature_batch: 10,
        cg: CgConfig {
            max_iters: 100,
            stop: StopCriterion::RelativeResidual { tol: 1e-10 },
            damping: 1e-3,
        },
        ..HfConfig::default()
    };
    let feed = batch.feed();
    let start = model.graph().loss_value(&mut EvalContext::new(model.graph()), &feed, state.w.values()).unwrap();
    for _ in 0..500 {
        block_hf_step_feeds(&mut state, model.graph(), &partition, &feed, &feed, &cfg).unwrap();
    }
    let end = model.graph().loss_value(&mut EvalContext::new(model.graph()), &feed, state.w.values()).unwrap();
    assert!(end < 1e-4 && end < start * 1e-3, "{start} -> {end}");
}

fn config(extra: &str, output: &std::path::Path) -> String {
    format!(
        "[model]\npreset = autoencoder-mnist\nlayers = 16, 8, 4\n\n\
         [optimizer]\nkind = block-hf\nhf.gradient_batch = 64\nhf.curvature_batch = 16\nhf.max_cg_iters = 10\n\n\
         [data]\nsource = synthetic\ntrain_samples = 200\neval_samples = 50\nrank = 3\n\n\
         [run]\nseed = 11\nmax_loops = 30\neval_every = 5\npatience = 0\nwall_clock = false\noutput = {}\n{extra}",
        output.display()
    )
}

fn run(text: &str) -> String {
    let cfg = parse_config(text).unwrap();
    run_experiment(&cfg).unwrap();
    fs::read_to_string(&cfg.output).unwrap()
}

#[test]
fn csv_schema_and_monotone_updates() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run(&config("", &dir.path().join("m.csv")));
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, csv_header(&["encoder".into(), "decoder".into()]));
    let cols = header.split(',').count();
    let mut last = 0;
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r.len(), cols);
        assert!(r[0] as usize > last);
        last = r[0] as usize;
        assert!(r[3].is_finite() && r[4].is_finite());
        assert!(r[5].is_nan(), "autoencoder has no accuracy");
    }
    assert_eq!(last, 30);
    assert!(rows[5][3] < rows[0][3]);
}

#[test]
fn same_seed_gives_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&config("", &dir.path().join("a.csv")));
    let b = run(&config("", &dir.path().join("b.csv")));
    assert_eq!(a, b);
    let c = run(&config("", &dir.path().join("c.csv")).replace("seed = 11", "seed = 12"));
    assert_ne!(a, c);
}

#[test]
fn parallel_blocks_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let serial = run(&config("", &dir.path().join("s.csv")));
    let text = config("", &dir.path().join("p.csv")).replace("hf.max_cg_iters = 10", "hf.max_cg_iters = 10\nhf.parallel_blocks = true");
    assert_eq!(serial, run(&text));
}

#[test]
fn adam_and_plain_hf_runs() {
    let dir = tempfile::tempdir().unwrap();
    let adam = run(&config("", &dir.path().join("a.csv")).replace("kind = block-hf", "kind = adam"));
    assert_eq!(adam.lines().next().unwrap(), csv_header(&[]));
    let hf = run(&config("", &dir.path().join("h.csv")).replace("kind = block-hf", "kind = hf"));
    assert_eq!(hf.lines().next().unwrap(), csv_header(&["all".into()]));
}

#[test]
fn polyak_average_is_used_for_eval_only() {
    let dir = tempfile::tempdir().unwrap();
    let plain = run(&config("", &dir.path().join("a.csv")));
    let avg = run(&config("", &dir.path().join("b.csv")).replace("kind = block-hf", "kind = block-hf\npolyak_decay = 0.9"));
    let field = |csv: &str, col: usize| -> Vec<String> { csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().to_string()).collect() };
    assert_eq!(field(&plain, 3), field(&avg, 3), "train loss uses current weights");
    assert_ne!(field(&plain, 4), field(&avg, 4));
}

#[test]
fn patience_stops_early() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("", &dir.path().join("e.csv"))
        .replace("patience = 0", "patience = 1")
        .replace("eval_every = 5", "eval_every = 1")
        .replace("max_loops = 30", "max_loops = 500")
        .replace("hf.max_cg_iters = 10", "hf.max_cg_iters = 10\nhf.learning_rate = 2.0");
    let cfg = parse_config(&text).unwrap();
    let summary = run_experiment(&cfg).unwrap();
    assert!(summary.stopped_early);
    assert!(summary.updates < 500);
    let rows = &summary.rows;
    let n = rows.len();
    assert!(rows[n - 1].eval_loss >= rows[n - 2].eval_loss);
}

#[test]
fn classification_rows_report_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[model]\npreset = lstm3x10\nlstm_layers = 1\nhidden = 3\n\n[optimizer]\nkind = block-hf\npartition = single\n\
         hf.gradient_batch = 20\nhf.curvature_batch = 10\nhf.max_cg_iters = 5\nhf.damping = 0.01\n\n\
         [data]\nsource = synthetic\ntrain_samples = 40\neval_samples = 20\nsequence = rows\n\n\
         [run]\nseed = 2\nmax_loops = 4\neval_every = 2\nwall_clock = false\noutput = {}\n",
        dir.path().join("l.csv").display()
    );
    let csv = run(&text);
    for line in csv.lines().skip(1) {
        let acc: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn non_finite_data_aborts_with_numerical_error() {
    let text = config("", std::path::Path::new("unused.csv"));
    let cfg = parse_config(&text).unwrap();
    let good = synth_autoencoder_data(250, 16, 3, 1).unwrap();
    let (train, eval) = good.split_at(200).unwrap();
    let mut x = train.inputs().clone();
    x.data_mut()[5] = f64::NAN;
    let bad = Dataset::autoencoding(x, Split::Train).unwrap();
    let exp = Experiment::with_data(&cfg, bad, eval).unwrap();
    let err = exp.run(|_| Ok(())).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn rows_already_emitted_survive_an_abort() {
    let text = config("", std::path::Path::new("unused.csv")).replace("eval_every = 5", "eval_every = 1");
    let cfg = parse_config(&text).unwrap();
    let exp = Experiment::prepare(&cfg).unwrap();
    let mut seen = 0;
    let err = exp
        .run(|row| {
            seen += 1;
            if row.update == 3 {
                Err(Error::NonFinite("injected".into()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
    assert!(err.is_numerical());
    assert_eq!(seen, 3);
}

#[test]
fn mismatched_data_is_rejected() {
    let cfg = parse_config(&config("", std::path::Path::new("unused.csv"))).unwrap();
    let wrong = synth_autoencoder_data(100, 9, 3, 1).unwrap();
    let (train, eval) = wrong.split_at(80).unwrap();
    assert!(Experiment::with_data(&cfg, train, eval).is_err());
    let small = synth_autoencoder_data(40, 16, 3, 1).unwrap();
    let (train, eval) = small.split_at(30).unwrap();
    assert!(Experiment::with_data(&cfg, train, eval).is_err(), "gradient batch larger than the training set");
}

#[test]
fn missing_mnist_reports_instructions() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("", &dir.path().join("m.csv"))
        .replace("source = synthetic", &format!("source = mnist\ndir = {}", dir.path().join("nothing").display()))
        .replace("rank = 3\n", "")
        .replace("layers = 16, 8, 4", "layers = 49, 8");
    let cfg = parse_config(&text).unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::DataMissing { .. }), "{err}");
    assert!(err.to_string().contains("train-images-idx3-ubyte"));
}

fn write_idx(dir: &std::path::Path, name: &str, dims: &[u32], payload: &[u8]) {
    let magic: u32 = 0x0800 | dims.len() as u32;
    let mut bytes = magic.to_be_bytes().to_vec();
    for d in dims {
        bytes.extend(d.to_be_bytes());
    }
    bytes.extend(payload);
    fs::write(dir.join(name), bytes).unwrap();
}

/// Writes `n` 28×28 images whose brightness encodes the label.
fn write_mnist_split(dir: &std::path::Path, images: &str, labels: &str, n: usize) {
    let labels_raw: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let pixels: Vec<u8> = labels_raw
        .iter()
        .flat_map(|&l| (0..784).map(move |p| if p % 28 < 14 { l * 25 } else { 255 - l * 25 }))
        .collect();
    write_idx(dir, images, &[n as u32, 28, 28], &pixels);
    write_idx(dir, labels, &[n as u32], &labels_raw);
}

#[test]
fn trains_from_idx_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    write_mnist_split(dir.path(), "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 30);
    write_mnist_split(dir.path(), "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 10);
    let source = format!("source = mnist\ndir = {}", dir.path().display());

    let ae = config("", &dir.path().join("ae.csv"))
        .replace("source = synthetic", &source)
        .replace("rank = 3\n", "")
        .replace("layers = 16, 8, 4", "layers = 49, 8")
        .replace("train_samples = 200", "train_samples = 30")
        .replace("eval_samples = 50", "eval_samples = 10")
        .replace("hf.gradient_batch = 64\nhf.curvature_batch = 16", "hf.gradient_batch = 20\nhf.curvature_batch = 10")
        .replace("max_loops = 30", "max_loops = 4");
    let cfg = parse_config(&ae).unwrap();
    let exp = Experiment::prepare(&cfg).unwrap();
    assert_eq!(exp.train_set().len(), 30);
    assert_eq!(exp.eval_set().len(), 10);
    // 4×4 average pooling of a left/right split keeps both halves' values.
    let x = exp.train_set().inputs();
    assert_eq!(x.cols(), 49);
    assert!((x.row(3)[0] - 75.0 / 255.0).abs() < 1e-12);
    assert!((x.row(3)[6] - 180.0 / 255.0).abs() < 1e-12);
    let summary = exp.run(|_| Ok(())).unwrap();
    assert!(summary.rows.iter().all(|r| r.train_loss.is_finite()));

    let lstm = format!(
        "[model]\npreset = lstm3x10\nlstm_layers = 1\nhidden = 3\n\n[optimizer]\nkind = block-hf\npartition = single\n\
         hf.gradient_batch = 20\nhf.curvature_batch = 10\nhf.max_cg_iters = 5\nhf.damping = 0.01\n\n\
         [data]\n{source}\ntrain_samples = 30\neval_samples = 10\n\n\
         [run]\nseed = 2\nmax_loops = 2\neval_every = 1\nwall_clock = false\noutput = {}\n",
        dir.path().join("l.csv").display()
    );
    let exp = Experiment::prepare(&parse_config(&lstm).unwrap()).unwrap();
    let t = exp.train_set().targets();
    assert_eq!(t.cols(), 10);
    assert_eq!(t.row(13)[3], 1.0);
    exp.run(|_| Ok(())).unwrap();
}
