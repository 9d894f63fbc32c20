//! IDX files as distributed with MNIST.
//!
//! Layout: a big-endian magic word `0x0000TTRR` (type `TT`, rank `RR`), `RR`
//! big-endian `u32` dimension sizes, then the row-major payload. Only
//! unsigned-byte files are read: rank-3 images (`0x00000803`), scaled to
//! `[0, 1]`, and rank-1 labels (`0x00000801`), returned as raw values.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

pub fn load_idx(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::DataMissing {
            path: path.to_path_buf(),
            hint: "file not found".into(),
        });
    }
    parse_idx(&fs::read(path)?)
}

pub fn parse_idx(bytes: &[u8]) -> Result<Tensor> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(i * 4..i * 4 + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Idx(format!("truncated header ({} bytes)", bytes.len())))
    };
    let magic = word(0)?;
    let (rank, scale) = match magic {
        IMAGES_MAGIC => (3, 1.0 / 255.0),
        LABELS_MAGIC => (1, 1.0),
        other => {
            return Err(Error::Idx(format!(
                "bad magic 0x{other:08x} (expected 0x{IMAGES_MAGIC:08x} or 0x{LABELS_MAGIC:08x})"
            )))
        }
    };
    let mut dims = Vec::with_capacity(rank);
    let mut len: usize = 1;
    for i in 0..rank {
        let d = word(1 + i)? as usize;
        if d == 0 {
            return Err(Error::Idx(format!("dimension {i} is zero")));
        }
        len = len
            .checked_mul(d)
            .ok_or_else(|| Error::Idx("dimension product overflows".into()))?;
        dims.push(d);
    }
    let start = 4 * (1 + rank);
    let payload = &bytes[start.min(bytes.len())..];
    if payload.len() < len {
        return Err(Error::Idx(format!(
            "truncated payload: expected {len} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > len {
        return Err(Error::Idx(format!(
            "{} trailing bytes after payload",
            payload.len() - len
        )));
    }
    let data = payload.iter().map(|&b| b as f64 * scale).collect();
    Tensor::new(dims, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn files(self) -> (&'static str, &'static str) {
        match self {
            MnistSplit::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            MnistSplit::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

pub const MNIST_HINT: &str = "download the four MNIST IDX files (train-images-idx3-ubyte, \
train-labels-idx1-ubyte, t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte), gunzip them, \
and point `data.dir` at the directory holding them";

/// Images as `[n × 28 × 28]` in `[0, 1]` plus integer labels, truncated to
/// the first `limit` samples when given.
pub fn load_mnist(dir: impl AsRef<Path>, split: MnistSplit, limit: Option<usize>) -> Result<(Tensor, Vec<usize>)> {
    let dir = dir.as_ref();
    let (img_name, lbl_name) = split.files();
    let find = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if p.exists() {
            return Ok(p);
        }
        // Some mirrors ship dots instead of dashes.
        let alt = dir.join(name.replacen("-idx", ".idx", 1));
        if alt.exists() {
            return Ok(alt);
        }
        Err(Error::DataMissing {
            path: p,
            hint: MNIST_HINT.into(),
        })
    };
    let images = load_idx(find(img_name)?)?;
    let labels = load_idx(find(lbl_name)?)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::Idx(format!(
            "{} images but {} labels",
            images.shape()[0],
            labels.len()
        )));
    }
    let n = limit.map_or(images.shape()[0], |l| l.min(images.shape()[0]));
    let (h, w) = (images.shape()[1], images.shape()[2]);
    let data = images.data()[..n * h * w].to_vec();
    let labels = labels.data()[..n].iter().map(|&l| l as usize).collect();
    Ok((Tensor::new(vec![n, h, w], data)?, labels))
}
