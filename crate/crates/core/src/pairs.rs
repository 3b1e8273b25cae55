//! Positive/negative node sets from the trained structure mask.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KHopAdjacency, NegativeCandidates};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSets {
    positives: Vec<Vec<usize>>,
    negatives: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePairs {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl PairSets {
    pub fn new(positives: Vec<Vec<usize>>, negatives: Vec<Vec<usize>>) -> Result<Self> {
        if positives.len() != negatives.len() {
            return Err(Error::LengthMismatch {
                what: "negative sets",
                expected: positives.len(),
                found: negatives.len(),
            });
        }
        Ok(Self {
            positives,
            negatives,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.positives.len()
    }

    pub fn positives(&self, i: usize) -> &[usize] {
        &self.positives[i]
    }

    pub fn negatives(&self, i: usize) -> &[usize] {
        &self.negatives[i]
    }

    /// Total number of triplets, `sum_i |S^p(i)|`.
    pub fn total(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    /// Debug dump keyed by node id.
    pub fn to_map(&self) -> BTreeMap<usize, NodePairs> {
        (0..self.num_nodes())
            .map(|i| {
                (
                    i,
                    NodePairs {
                        pos: self.positives[i].clone(),
                        neg: self.negatives[i].clone(),
                    },
                )
            })
            .collect()
    }
}

/// `floor(ratio * degree)`, guarded against representation error.
pub fn sample_count(ratio: f64, degree: usize) -> usize {
    (ratio * degree as f64 + 1e-9).floor() as usize
}

/// For every node: rank its k-hop neighbours by mask weight (descending,
/// ties by ascending id), keep the top `floor(r * degree)` as positives and
/// draw as many negatives without replacement from its candidates. When the
/// candidates run short both sets shrink to the candidate count.
pub fn build_pairs<S: Scalar>(
    structure: &[S],
    khop: &KHopAdjacency,
    candidates: &NegativeCandidates,
    ratio: f64,
    seed: u64,
) -> Result<PairSets> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sample ratio must be in (0, 1], got {ratio}"
        )));
    }
    if structure.len() != khop.len() {
        return Err(Error::LengthMismatch {
            what: "structure mask",
            expected: khop.len(),
            found: structure.len(),
        });
    }
    let n = khop.pattern().n_rows();
    if candidates.per_node().len() != n {
        return Err(Error::LengthMismatch {
            what: "negative candidate lists",
            expected: n,
            found: candidates.per_node().len(),
        });
    }
    let mut rng = rng::substream(seed, rng::PAIRS);
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    for i in 0..n {
        let range = khop.pattern().row_range(i);
        let mut ranked: Vec<(usize, S)> = khop.pattern().cols()[range.clone()]
            .iter()
            .copied()
            .zip(structure[range].iter().copied())
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        let pool = candidates.of(i);
        let take = sample_count(ratio, ranked.len()).min(pool.len());
        positives.push(ranked[..take].iter().map(|&(j, _)| j).collect());
        negatives.push(
            index::sample(&mut rng, pool.len(), take)
                .into_iter()
                .map(|p| pool[p])
                .collect(),
        );
    }
    PairSets::new(positives, negatives)
}
