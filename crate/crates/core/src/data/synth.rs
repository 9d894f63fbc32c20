//! Desk-scale stand-ins for MNIST.

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{seeded_uniform, Rng};
use crate::tensor::{gemm, Tensor};

/// `x_i = σ(U z_i)` with `U ∈ [-1,1)^{dim×rank}` and `z_i ∈ [-1,1)^rank`;
/// targets equal inputs. `U` is drawn before the codes.
pub fn synth_autoencoder_data(n: usize, dim: usize, rank: usize, seed: u64) -> Result<Dataset> {
    if rank > dim {
        return Err(Error::invalid(format!("rank {rank} exceeds dimension {dim}")));
    }
    if n == 0 || dim == 0 {
        return Err(Error::invalid("synthetic dataset needs n > 0 and dim > 0"));
    }
    let inputs = if rank == 0 {
        Tensor::filled(&[n, dim], 0.5)
    } else {
        let mut rng = Rng::new(seed);
        let u = seeded_uniform(&[dim, rank], -1.0, 1.0, &mut rng)?;
        let z = seeded_uniform(&[n, rank], -1.0, 1.0, &mut rng)?;
        // rows of Z·Uᵀ are (U z_i)ᵀ
        let ut = transpose(&u);
        gemm(&z, &ut)?.map(|v| 1.0 / (1.0 + (-v).exp()))
    };
    Dataset::autoencoding(inputs, Split::Train)
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::matrix(c, r, out).expect("transpose shape")
}

/// Sequential classification data shaped like pooled MNIST: each class has a
/// `side × side` prototype made of three soft blobs, and samples are the
/// prototype plus uniform pixel noise of amplitude `noise`, clipped to
/// `[0, 1]`. Rows hold the row-major image; targets are one-hot.
pub fn synth_sequence_classification(
    n: usize,
    classes: usize,
    side: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || classes < 2 || side == 0 {
        return Err(Error::invalid("need n > 0, at least two classes and side > 0"));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::invalid(format!("noise {noise} outside [0, 1]")));
    }
    let mut rng = Rng::new(seed);
    let span = (side - 1) as f64;
    let prototypes: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let blobs: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    let ci = rng.uniform(0.0, span.max(f64::MIN_POSITIVE));
                    let cj = rng.uniform(0.0, span.max(f64::MIN_POSITIVE));
                    let width = rng.uniform(0.8, 1.6);
                    (ci, cj, width)
                })
                .collect();
            (0..side * side)
                .map(|p| {
                    let (i, j) = ((p / side) as f64, (p % side) as f64);
                    let v: f64 = blobs
                        .iter()
                        .map(|&(ci, cj, s)| (-((i - ci).powi(2) + (j - cj).powi(2)) / (2.0 * s * s)).exp())
                        .sum();
                    v.min(1.0)
                })
                .collect()
        })
        .collect();

    let mut inputs = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.below(classes);
        labels.push(label);
        for &p in &prototypes[label] {
            let jitter = if noise > 0.0 { rng.uniform(-noise, noise) } else { 0.0 };
            inputs.push((p + jitter).clamp(0.0, 1.0));
        }
    }
    let x = Tensor::matrix(n, side * side, inputs)?;
    Dataset::classification(x, &labels, classes, Split::Train)
}
