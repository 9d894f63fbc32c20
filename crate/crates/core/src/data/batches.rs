use crate::error::{Error, Result};
use crate::rng::Rng;

/// A gradient mini-batch `S_g` and the curvature mini-batch `S_c ⊆ S_g`,
/// both as row indices into the training set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPair {
    gradient: Vec<usize>,
    curvature: Vec<usize>,
}

impl BatchPair {
    /// Validates that `S_g` is non-empty with unique indices and that every
    /// index of `S_c` occurs in `S_g`.
    pub fn new(gradient: Vec<usize>, curvature: Vec<usize>) -> Result<Self> {
        if gradient.is_empty() || curvature.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut sorted = gradient.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("gradient batch contains duplicate indices"));
        }
        if let Some(i) = curvature.iter().find(|i| sorted.binary_search(i).is_err()) {
            return Err(Error::invalid(format!(
                "curvature index {i} is not in the gradient batch"
            )));
        }
        Ok(Self {
            gradient,
            curvature,
        })
    }

    pub fn gradient(&self) -> &[usize] {
        &self.gradient
    }

    pub fn curvature(&self) -> &[usize] {
        &self.curvature
    }
}

/// Endless stream of batch pairs. Each epoch reshuffles `0..n` with
/// Fisher–Yates, cuts consecutive chunks of `|S_g|` (dropping a short tail),
/// and takes the first `|S_c|` indices of each chunk as `S_c`.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    n: usize,
    gradient: usize,
    curvature: usize,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

pub fn sample_batches(n: usize, gradient: usize, curvature: usize, rng: Rng) -> Result<BatchSampler> {
    if gradient == 0 || curvature == 0 {
        return Err(Error::invalid("batch sizes must be positive"));
    }
    if gradient > n {
        return Err(Error::invalid(format!(
            "gradient batch {gradient} exceeds dataset size {n}"
        )));
    }
    if curvature > gradient {
        return Err(Error::invalid(format!(
            "curvature batch {curvature} exceeds gradient batch {gradient}"
        )));
    }
    Ok(BatchSampler {
        n,
        gradient,
        curvature,
        rng,
        order: Vec::new(),
        cursor: usize::MAX,
        epoch: 0,
    })
}

impl BatchSampler {
    /// Number of epochs started so far (1 after the first batch).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n / self.gradient
    }
}

impl Iterator for BatchSampler {
    type Item = BatchPair;

    fn next(&mut self) -> Option<BatchPair> {
        if self.cursor == usize::MAX || self.cursor + self.gradient > self.n {
            self.order = (0..self.n).collect();
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
            self.epoch += 1;
        }
        let chunk = self.order[self.cursor..self.cursor + self.gradient].to_vec();
        self.cursor += self.gradient;
        let curvature = chunk[..self.curvature].to_vec();
        Some(BatchPair {
            gradient: chunk,
            curvature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn full_batch_is_a_permutation() {
        let mut s = sample_batches(10, 10, 3, Rng::new(1)).unwrap();
        for _ in 0..3 {
            let p = s.next().unwrap();
            let mut g = p.gradient().to_vec();
            g.sort_unstable();
            assert_eq!(g, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(s.epoch(), 3);
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<_> = sample_batches(50, 8, 2, Rng::new(5)).unwrap().take(20).collect();
        let b: Vec<_> = sample_batches(50, 8, 2, Rng::new(5)).unwrap().take(20).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_sizes_give_equal_sets() {
        let p = sample_batches(9, 4, 4, Rng::new(0)).unwrap().next().unwrap();
        assert_eq!(p.gradient(), p.curvature());
    }

    #[test]
    fn short_tail_is_dropped() {
        let mut s = sample_batches(10, 4, 1, Rng::new(2)).unwrap();
        assert_eq!(s.batches_per_epoch(), 2);
        s.next();
        s.next();
        assert_eq!(s.epoch(), 1);
        s.next();
        assert_eq!(s.epoch(), 2);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(sample_batches(5, 6, 1, Rng::new(0)).is_err());
        assert!(sample_batches(5, 2, 3, Rng::new(0)).is_err());
        assert!(BatchPair::new(vec![1, 2], vec![3]).is_err());
        assert!(BatchPair::new(vec![1, 1], vec![1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn curvature_is_prefix_of_gradient(seed in any::<u64>(), n in 1usize..60, g_frac in 0.0f64..1.0, c_frac in 0.0f64..1.0) {
            let g = 1 + ((n - 1) as f64 * g_frac) as usize;
            let c = 1 + ((g - 1) as f64 * c_frac) as usize;
            let p = sample_batches(n, g, c, Rng::new(seed)).unwrap().next().unwrap();
            prop_assert_eq!(p.gradient().len(), g);
            prop_assert_eq!(&p.gradient()[..c], p.curvature());
            let mut u = p.gradient().to_vec();
            u.sort_unstable();
            u.dedup();
            prop_assert_eq!(u.len(), g);
            prop_assert!(BatchPair::new(p.gradient().to_vec(), p.curvature().to_vec()).is_ok());
        }
    }
}
