//! Rank-2 helpers for the evaluation passes. Shapes are checked by the
//! callers; these only assert in debug builds.

use crate::tensor::{kernels, Tensor};

pub(crate) fn dims(t: &Tensor) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, data).expect("helper shapes are consistent")
}

/// `A·B`
pub(crate) fn mm(a: &Tensor, b: &Tensor) -> Tensor {
    let ((m, k), (k2, n)) = (dims(a), dims(b));
    debug_assert_eq!(k, k2);
    let mut c = vec![0.0; m * n];
    kernels::gemm_nn(a.data(), b.data(), &mut c, m, k, n);
    mat(m, n, c)
}

/// `Aᵀ·B`
pub(crate) fn mm_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let ((k, m), (k2, n)) = (dims(a), dims(b));
    debug_assert_eq!(k, k2);
    let mut c = vec![0.0; m * n];
    kernels::gemm_tn(a.data(), b.data(), &mut c, m, k, n);
    mat(m, n, c)
}

/// `A·Bᵀ`
pub(crate) fn mm_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let ((m, k), (n, k2)) = (dims(a), dims(b));
    debug_assert_eq!(k, k2);
    let mut c = vec![0.0; m * n];
    kernels::gemm_nt(a.data(), b.data(), &mut c, m, k, n);
    mat(m, n, c)
}

/// Elementwise `f(a, b)` where `b` is either the shape of `a` or one row.
pub(crate) fn zip_bcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (m, n) = dims(a);
    let bd = b.data();
    let data = if b.shape() == a.shape() {
        a.data().iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
    } else {
        debug_assert_eq!(dims(b), (1, n));
        let mut out = Vec::with_capacity(m * n);
        for row in a.data().chunks_exact(n) {
            out.extend(row.iter().zip(bd).map(|(&x, &y)| f(x, y)));
        }
        out
    };
    mat(m, n, data)
}

/// Elementwise product of two equally shaped tensors.
pub(crate) fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip_bcast(a, b, |x, y| x * y)
}

/// Sums rows when `shape` is a single row and `t` is not; identity otherwise.
pub(crate) fn reduce_to(t: Tensor, shape: &[usize]) -> Tensor {
    if t.shape() == shape {
        return t;
    }
    let (_, n) = dims(&t);
    let mut out = vec![0.0; n];
    for row in t.data().chunks_exact(n) {
        kernels::axpy(1.0, row, &mut out);
    }
    mat(1, n, out)
}

/// `slot += t`, treating `None` as zero.
pub(crate) fn accumulate(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.shape(), t.shape());
            kernels::axpy(1.0, t.data(), acc.data_mut());
        }
        None => *slot = Some(t),
    }
}

pub(crate) fn add_opt(a: Option<Tensor>, b: Option<Tensor>) -> Option<Tensor> {
    match (a, b) {
        (Some(mut x), Some(y)) => {
            kernels::axpy(1.0, y.data(), x.data_mut());
            Some(x)
        }
        (x, None) => x,
        (None, y) => y,
    }
}

pub(crate) fn slice_cols(t: &Tensor, start: usize, len: usize) -> Tensor {
    let (m, n) = dims(t);
    let mut out = Vec::with_capacity(m * len);
    for row in t.data().chunks_exact(n) {
        out.extend_from_slice(&row[start..start + len]);
    }
    mat(m, len, out)
}

/// Places `part` at columns `start..` of a zero matrix with `cols` columns.
pub(crate) fn embed_cols(part: &Tensor, cols: usize, start: usize) -> Tensor {
    let (m, len) = dims(part);
    let mut out = vec![0.0; m * cols];
    for (dst, src) in out.chunks_exact_mut(cols).zip(part.data().chunks_exact(len)) {
        dst[start..start + len].copy_from_slice(src);
    }
    mat(m, cols, out)
}

pub(crate) fn concat_cols(parts: &[&Tensor]) -> Tensor {
    let m = parts[0].shape()[0];
    let total: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut out = Vec::with_capacity(m * total);
    for i in 0..m {
        for p in parts {
            out.extend_from_slice(p.row(i));
        }
    }
    mat(m, total, out)
}

pub(crate) fn mean_rows(t: &Tensor) -> Tensor {
    let (m, _) = dims(t);
    let summed = reduce_to(t.clone(), &[1, t.shape()[1]]);
    summed.scale(1.0 / m as f64)
}

/// Repeats a single row `rows` times.
pub(crate) fn repeat_row(row: &Tensor, rows: usize) -> Tensor {
    let (_, n) = dims(row);
    let mut out = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        out.extend_from_slice(row.data());
    }
    mat(rows, n, out)
}

/// Row-wise softmax.
pub(crate) fn softmax_rows(z: &Tensor) -> Tensor {
    let (m, n) = dims(z);
    let mut out = Vec::with_capacity(m * n);
    for row in z.data().chunks_exact(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for e in &mut out[start..] {
            *e /= total;
        }
    }
    mat(m, n, out)
}

/// Row-wise `log Σ exp`.
pub(crate) fn logsumexp_rows(z: &Tensor) -> Vec<f64> {
    let (_, n) = dims(z);
    z.data()
        .chunks_exact(n)
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &v in row {
                total += (v - max).exp();
            }
            max + total.ln()
        })
        .collect()
}

pub(crate) fn row_sums(t: &Tensor) -> Vec<f64> {
    let (_, n) = dims(t);
    t.data().chunks_exact(n).map(|r| r.iter().sum()).collect()
}

/// Applies `diag(p) − ppᵀ` to each row of `u`, scaled by `weights[row]`.
pub(crate) fn softmax_hessian_apply(p: &Tensor, u: &Tensor, weights: &[f64]) -> Tensor {
    let (m, n) = dims(p);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let (pr, ur) = (p.row(i), u.row(i));
        let ptu = kernels::dot(pr, ur);
        out.extend(pr.iter().zip(ur).map(|(&pk, &uk)| weights[i] * pk * (uk - ptu)));
    }
    mat(m, n, out)
}
