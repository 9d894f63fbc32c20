//! Flat parameter vectors and the layout that maps them back to named leaves.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// How a parameter leaf is initialised.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Constant(f64),
    /// Gate-stacked LSTM bias `[i | f | c | o]`: forget gate at 1, rest 0.
    LstmBias { hidden: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafSpec {
    pub name: String,
    pub offset: usize,
    pub shape: [usize; 2],
    pub init: Init,
}

impl LeafSpec {
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, contiguous, non-overlapping leaves covering `0..len`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    leaves: Vec<LeafSpec>,
    len: usize,
}

impl ParamLayout {
    pub(crate) fn push(&mut self, name: &str, shape: [usize; 2], init: Init) -> Result<usize> {
        if shape[0] == 0 || shape[1] == 0 {
            return Err(Error::invalid(format!(
                "parameter `{name}` has an empty shape {shape:?}"
            )));
        }
        if self.find(name).is_some() {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        self.leaves.push(LeafSpec {
            name: name.to_string(),
            offset: self.len,
            shape,
            init,
        });
        self.len += shape[0] * shape[1];
        Ok(self.leaves.len() - 1)
    }

    pub fn leaves(&self) -> &[LeafSpec] {
        &self.leaves
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn find(&self, name: &str) -> Option<&LeafSpec> {
        self.leaves.iter().find(|l| l.name == name)
    }
}

/// The flattened parameter vector `w` together with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::length("ParamVector", layout.len(), values.len()));
        }
        Ok(Self { values, layout })
    }

    /// Draws every leaf according to its [`Init`], in layout order.
    pub fn initialize(layout: Arc<ParamLayout>, rng: &mut Rng) -> Self {
        let mut values = Vec::with_capacity(layout.len());
        for leaf in layout.leaves() {
            match leaf.init {
                Init::Glorot { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    values.extend((0..leaf.len()).map(|_| rng.uniform(-a, a)));
                }
                Init::Zeros => values.extend(std::iter::repeat_n(0.0, leaf.len())),
                Init::Constant(c) => values.extend(std::iter::repeat_n(c, leaf.len())),
                Init::LstmBias { hidden } => {
                    values.extend((0..leaf.len()).map(|j| {
                        if (hidden..2 * hidden).contains(&j) {
                            1.0
                        } else {
                            0.0
                        }
                    }));
                }
            }
        }
        Self { values, layout }
    }

    /// Packs per-leaf tensors, given in layout order, into one vector.
    pub fn flatten(layout: Arc<ParamLayout>, leaves: &[Tensor]) -> Result<Self> {
        if leaves.len() != layout.leaves().len() {
            return Err(Error::length(
                "flatten",
                layout.leaves().len(),
                leaves.len(),
            ));
        }
        let mut values = Vec::with_capacity(layout.len());
        for (spec, t) in layout.leaves().iter().zip(leaves) {
            if t.len() != spec.len() {
                return Err(Error::shape("flatten", &spec.shape, t.shape()));
            }
            values.extend_from_slice(t.data());
        }
        Ok(Self { values, layout })
    }

    /// Splits the vector back into one `rows × cols` tensor per leaf.
    pub fn unflatten(&self) -> Vec<(String, Tensor)> {
        self.layout
            .leaves()
            .iter()
            .map(|leaf| {
                let data = self.values[leaf.range()].to_vec();
                let t = Tensor::matrix(leaf.shape[0], leaf.shape[1], data)
                    .expect("layout shapes are validated on push");
                (leaf.name.clone(), t)
            })
            .collect()
    }

    pub fn leaf(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|l| &self.values[l.range()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
