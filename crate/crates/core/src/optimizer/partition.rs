use std::ops::Range;

use crate::error::{Error, Result};
use crate::models::ParamLayout;

pub const PARTITION_PRESETS: &[(&str, &str)] = &[
    ("single", "one block holding every parameter (ordinary HF)"),
    ("autoencoder-2block", "encoder | decoder"),
    ("lstm-3block", "one block per LSTM layer; the top block also holds the output head"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub leaves: Vec<String>,
    ranges: Vec<Range<usize>>,
    size: usize,
}

impl Block {
    /// Index ranges into the flat parameter vector, in layout order.
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// Disjoint blocks of whole parameter leaves that together cover the layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Block>,
    total: usize,
}

impl BlockPartition {
    pub fn new(layout: &ParamLayout, blocks: Vec<(String, Vec<String>)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("partition has no blocks"));
        }
        let mut owner: Vec<Option<usize>> = vec![None; layout.leaves().len()];
        for (b, (name, leaves)) in blocks.iter().enumerate() {
            if leaves.is_empty() {
                return Err(Error::invalid(format!("block `{name}` is empty")));
            }
            for leaf in leaves {
                let idx = layout
                    .leaves()
                    .iter()
                    .position(|l| &l.name == leaf)
                    .ok_or_else(|| Error::invalid(format!("block `{name}` names unknown leaf `{leaf}`")))?;
                if let Some(prev) = owner[idx] {
                    return Err(Error::invalid(format!(
                        "leaf `{leaf}` is in both `{}` and `{name}`",
                        blocks[prev].0
                    )));
                }
                owner[idx] = Some(b);
            }
        }
        if let Some(i) = owner.iter().position(Option::is_none) {
            return Err(Error::invalid(format!(
                "leaf `{}` is not covered by any block",
                layout.leaves()[i].name
            )));
        }
        let resolved = blocks
            .into_iter()
            .enumerate()
            .map(|(b, (name, _))| {
                // Leaves are re-read in layout order so gather/scatter walk
                // the flat vector monotonically.
                let members: Vec<_> = layout
                    .leaves()
                    .iter()
                    .zip(&owner)
                    .filter(|(_, o)| **o == Some(b))
                    .map(|(l, _)| l)
                    .collect();
                let mut ranges: Vec<Range<usize>> = Vec::new();
                for l in &members {
                    match ranges.last_mut() {
                        Some(last) if last.end == l.offset => last.end = l.range().end,
                        _ => ranges.push(l.range()),
                    }
                }
                Block {
                    name,
                    leaves: members.iter().map(|l| l.name.clone()).collect(),
                    size: members.iter().map(|l| l.len()).sum(),
                    ranges,
                }
            })
            .collect();
        Ok(Self {
            blocks: resolved,
            total: layout.len(),
        })
    }

    pub fn single(layout: &ParamLayout) -> Self {
        let leaves = layout.leaves().iter().map(|l| l.name.clone()).collect();
        Self::new(layout, vec![("all".into(), leaves)]).expect("a single block always covers the layout")
    }

    /// Groups leaves by the first matching name prefix.
    pub fn by_prefix(layout: &ParamLayout, groups: &[(&str, &[&str])]) -> Result<Self> {
        let mut blocks: Vec<(String, Vec<String>)> =
            groups.iter().map(|(n, _)| (n.to_string(), Vec::new())).collect();
        for leaf in layout.leaves() {
            if let Some(b) = groups
                .iter()
                .position(|(_, prefixes)| prefixes.iter().any(|p| leaf.name.starts_with(p)))
            {
                blocks[b].1.push(leaf.name.clone());
            }
        }
        Self::new(layout, blocks)
    }

    pub fn preset(name: &str, layout: &ParamLayout) -> Result<Self> {
        match name {
            "single" => Ok(Self::single(layout)),
            "autoencoder-2block" => {
                Self::by_prefix(layout, &[("encoder", &["enc"]), ("decoder", &["dec"])])
            }
            "lstm-3block" => {
                let layers = (1..)
                    .take_while(|l| layout.find(&format!("lstm{l}.w_x")).is_some())
                    .count();
                if layers == 0 {
                    return Err(Error::invalid("`lstm-3block` needs an LSTM layout"));
                }
                let mut blocks: Vec<(String, Vec<String>)> = (1..=layers)
                    .map(|l| {
                        let prefix = format!("lstm{l}.");
                        let leaves = layout
                            .leaves()
                            .iter()
                            .filter(|leaf| leaf.name.starts_with(&prefix))
                            .map(|leaf| leaf.name.clone())
                            .collect();
                        (format!("lstm{l}"), leaves)
                    })
                    .collect();
                let head = layout
                    .leaves()
                    .iter()
                    .filter(|l| l.name.starts_with("head."))
                    .map(|l| l.name.clone());
                blocks.last_mut().expect("layers >= 1").1.extend(head);
                Self::new(layout, blocks)
            }
            other => Err(Error::UnknownName {
                kind: "partition preset",
                name: other.into(),
                allowed: PARTITION_PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", "),
            }),
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Length of the full parameter vector.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn block_size(&self, b: usize) -> usize {
        self.blocks[b].size
    }

    /// Entries of block `b` from a full vector.
    pub fn gather(&self, b: usize, full: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.blocks[b].size);
        for r in &self.blocks[b].ranges {
            out.extend_from_slice(&full[r.clone()]);
        }
        out
    }

    /// Writes block `b`'s entries into a full vector.
    pub fn scatter(&self, b: usize, part: &[f64], full: &mut [f64]) {
        let mut pos = 0;
        for r in &self.blocks[b].ranges {
            full[r.clone()].copy_from_slice(&part[pos..pos + r.len()]);
            pos += r.len();
        }
    }

    /// Full-length vector equal to `part` on block `b` and zero elsewhere.
    pub fn embed(&self, b: usize, part: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.total];
        self.scatter(b, part, &mut full);
        full
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_autoencoder, build_stacked_lstm, LstmSpec};

    #[test]
    fn autoencoder_two_blocks() {
        let g = build_autoencoder(&[6, 4, 2]).unwrap();
        let p = BlockPartition::preset("autoencoder-2block", g.layout()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.block_size(0), 6 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(p.block_size(0) + p.block_size(1), g.param_count());
        assert_eq!(p.blocks()[0].ranges().len(), 1);
    }

    #[test]
    fn lstm_blocks_put_head_on_top() {
        let spec = LstmSpec { layers: 3, hidden: 2, input_size: 1, steps: 2, classes: 3 };
        let g = build_stacked_lstm(&spec).unwrap();
        let p = BlockPartition::preset("lstm-3block", g.layout()).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.blocks()[2].leaves.iter().any(|l| l == "head.w"));
        assert!(BlockPartition::preset("autoencoder-2block", g.layout()).is_err());
    }

    #[test]
    fn validation() {
        let g = build_autoencoder(&[3, 2]).unwrap();
        let l = g.layout();
        let dup = vec![
            ("a".to_string(), vec!["enc0.w".to_string(), "enc0.b".to_string()]),
            ("b".to_string(), vec!["enc0.b".to_string(), "dec0.w".to_string(), "dec0.b".to_string()]),
        ];
        assert!(BlockPartition::new(l, dup).is_err());
        let missing = vec![("a".to_string(), vec!["enc0.w".to_string()])];
        assert!(BlockPartition::new(l, missing).is_err());
        assert!(BlockPartition::preset("nope", l).is_err());
    }

    #[test]
    fn gather_scatter_round_trip() {
        let g = build_autoencoder(&[3, 2]).unwrap();
        let l = g.layout();
        let p = BlockPartition::new(
            l,
            vec![
                ("weights".into(), vec!["enc0.w".into(), "dec0.w".into()]),
                ("biases".into(), vec!["enc0.b".into(), "dec0.b".into()]),
            ],
        )
        .unwrap();
        let full: Vec<f64> = (0..l.len()).map(|i| i as f64).collect();
        let mut back = vec![0.0; l.len()];
        for b in 0..p.len() {
            let part = p.gather(b, &full);
            assert_eq!(part.len(), p.block_size(b));
            p.scatter(b, &part, &mut back);
        }
        assert_eq!(back, full);
    }
}
