//! Datasets, mini-batches and the preprocessing used by the benchmarks.

mod batches;
pub mod idx;
mod preprocess;
mod synth;

pub use batches::{sample_batches, BatchPair, BatchSampler};
pub use idx::{load_idx, load_mnist, MnistSplit};
pub use preprocess::{avg_pool, desequentialize, pool_images, sequentialize, SequenceMode};
pub use synth::{synth_autoencoder_data, synth_sequence_classification};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Inputs and targets bound to a graph's `x` and `y` leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::length("Batch targets", inputs.rows(), targets.rows()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn feed(&self) -> Vec<&Tensor> {
        vec![&self.inputs, &self.targets]
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` samples as rows of `inputs` and `targets`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    targets: Tensor,
    split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor, targets: Tensor, split: Split) -> Result<Self> {
        if inputs.shape().len() != 2 || targets.shape().len() != 2 {
            return Err(Error::invalid("dataset tensors must be rank 2 (samples × features)"));
        }
        if inputs.rows() != targets.rows() {
            return Err(Error::length("Dataset targets", inputs.rows(), targets.rows()));
        }
        Ok(Self {
            inputs,
            targets,
            split,
        })
    }

    /// Reconstruction dataset: targets are the inputs.
    pub fn autoencoding(inputs: Tensor, split: Split) -> Result<Self> {
        let targets = inputs.clone();
        Self::new(inputs, targets, split)
    }

    /// Classification dataset with one-hot targets.
    pub fn classification(inputs: Tensor, labels: &[usize], classes: usize, split: Split) -> Result<Self> {
        Self::new(inputs, one_hot(labels, classes)?, split)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        if indices.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Batch::new(
            self.inputs.select_rows(indices)?,
            self.targets.select_rows(indices)?,
        )
    }

    pub fn full_batch(&self) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    /// First `n` samples and the remainder, as two datasets.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::invalid(format!(
                "cannot split {} samples at {n}",
                self.len()
            )));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        let a = self.gather(&head)?;
        let b = self.gather(&tail)?;
        Ok((
            Dataset::new(a.inputs, a.targets, self.split)?,
            Dataset::new(b.inputs, b.targets, self.split)?,
        ))
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::matrix(labels.len(), classes, data)
}

/// Index of the largest entry of each row; ties resolve to the first.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose argmax matches the target's argmax.
pub fn accuracy(outputs: &Tensor, targets: &Tensor) -> f64 {
    let (p, t) = (argmax_rows(outputs), argmax_rows(targets));
    let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
    hits as f64 / p.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_and_accuracy() {
        let t = one_hot(&[2, 0], 3).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let out = Tensor::from_rows(&[&[0.1, 0.2, 0.7], &[0.5, 0.6, 0.0]]).unwrap();
        assert_eq!(accuracy(&out, &t), 0.5);
        assert!(one_hot(&[3], 3).is_err());
    }

    #[test]
    fn gather_rejects_empty() {
        let d = Dataset::autoencoding(Tensor::zeros(&[3, 2]), Split::Train).unwrap();
        assert!(matches!(d.gather(&[]), Err(Error::EmptyBatch)));
        assert_eq!(d.gather(&[2, 0]).unwrap().len(), 2);
    }

    #[test]
    fn split_at_partitions_rows() {
        let x = Tensor::matrix(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let d = Dataset::autoencoding(x, Split::Train).unwrap();
        let (a, b) = d.split_at(3).unwrap();
        assert_eq!(a.inputs().data(), &[0.0, 1.0, 2.0]);
        assert_eq!(b.inputs().data(), &[3.0]);
    }
}
