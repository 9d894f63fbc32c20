use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean over non-overlapping `k × k` windows of an `H × W` image.
pub fn avg_pool(img: &Tensor, k: usize) -> Result<Tensor> {
    if img.shape().len() != 2 {
        return Err(Error::invalid(format!("avg_pool expects H×W, got {:?}", img.shape())));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(Error::invalid(format!(
            "pool size {k} does not divide image {h}×{w}"
        )));
    }
    let (oh, ow) = (h / k, w / k);
    let norm = 1.0 / (k * k) as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for bi in 0..oh {
        for bj in 0..ow {
            let mut acc = 0.0;
            for i in bi * k..(bi + 1) * k {
                for j in bj * k..(bj + 1) * k {
                    acc += img.data()[i * w + j];
                }
            }
            out.push(acc * norm);
        }
    }
    Tensor::matrix(oh, ow, out)
}

/// Pools every image of an `[n × H × W]` stack and flattens the result to
/// `[n × (H/k)(W/k)]`, one row-major image per row.
pub fn pool_images(images: &Tensor, k: usize) -> Result<Tensor> {
    if images.shape().len() != 3 {
        return Err(Error::invalid(format!(
            "pool_images expects n×H×W, got {:?}",
            images.shape()
        )));
    }
    let (n, h, w) = (images.shape()[0], images.shape()[1], images.shape()[2]);
    let mut data = Vec::new();
    for i in 0..n {
        let img = Tensor::matrix(h, w, images.data()[i * h * w..(i + 1) * h * w].to_vec())?;
        data.extend_from_slice(avg_pool(&img, k)?.data());
    }
    let per = data.len() / n;
    Tensor::matrix(n, per, data)
}

/// How an image becomes a sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SequenceMode {
    /// One pixel per step, row-major.
    #[default]
    Pixels,
    /// One image row per step.
    Rows,
}

impl FromStr for SequenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixels" => Ok(SequenceMode::Pixels),
            "rows" => Ok(SequenceMode::Rows),
            other => Err(Error::UnknownName {
                kind: "sequence mode",
                name: other.into(),
                allowed: "pixels, rows".into(),
            }),
        }
    }
}

impl SequenceMode {
    /// `(steps, features per step)` for a `side × side` image.
    pub fn shape(self, side: usize) -> (usize, usize) {
        match self {
            SequenceMode::Pixels => (side * side, 1),
            SequenceMode::Rows => (side, side),
        }
    }
}

/// Row-major scan into `[steps × features]`. Flattened, both modes give the
/// same vector, which is what the LSTM input leaf consumes.
pub fn sequentialize(img: &Tensor, mode: SequenceMode) -> Tensor {
    let (h, w) = (img.rows(), img.cols());
    let data = img.data().to_vec();
    let shape = match mode {
        SequenceMode::Pixels => vec![h * w, 1],
        SequenceMode::Rows => vec![h, w],
    };
    Tensor::new(shape, data).expect("same element count")
}

/// Inverse of [`sequentialize`] for a `side`-wide image.
pub fn desequentialize(seq: &Tensor, side: usize) -> Result<Tensor> {
    if side == 0 || !seq.len().is_multiple_of(side) {
        return Err(Error::invalid(format!(
            "{} values do not form rows of width {side}",
            seq.len()
        )));
    }
    Tensor::matrix(seq.len() / side, side, seq.data().to_vec())
}
