//! Undirected graphs, k-hop neighbourhoods, negative candidates and splits.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::sparse::SparsePattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Immutable undirected graph with dense node features and integer labels.
///
/// The adjacency is stored symmetric and without self-loops.
#[derive(Debug, Clone)]
pub struct Graph<S> {
    adjacency: Arc<SparsePattern>,
    features: Array2<S>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Vec<Split>,
}

impl<S: Scalar> Graph<S> {
    /// Applies the symmetric closure, drops self-loops and duplicates. Every
    /// node starts in the training partition.
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<S>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if let Some(&(i, j)) = edges
            .iter()
            .find(|&&(i, j)| i >= num_nodes || j >= num_nodes)
        {
            return Err(Error::EdgeOutOfRange(i, j, num_nodes));
        }
        if features.nrows() != num_nodes {
            return Err(Error::LengthMismatch {
                what: "feature rows",
                expected: num_nodes,
                found: features.nrows(),
            });
        }
        if labels.len() != num_nodes {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: num_nodes,
                found: labels.len(),
            });
        }
        let adjacency = SparsePattern::from_entries(
            num_nodes,
            num_nodes,
            edges
                .iter()
                .filter(|(i, j)| i != j)
                .flat_map(|&(i, j)| [(i, j), (j, i)]),
        )?;
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(Self {
            adjacency: Arc::new(adjacency),
            features,
            labels,
            num_classes,
            split: vec![Split::Train; num_nodes],
        })
    }

    /// Like [`Graph::new`] but from row vectors, rejecting ragged rows.
    pub fn from_rows(
        num_nodes: usize,
        edges: &[(usize, usize)],
        rows: &[Vec<S>],
        labels: Vec<usize>,
    ) -> Result<Self> {
        Self::new(num_nodes, edges, features_from_rows(rows)?, labels)
    }

    /// Replaces the train/val/test partition.
    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.num_nodes() {
            return Err(Error::LengthMismatch {
                what: "split tags",
                expected: self.num_nodes(),
                found: split.len(),
            });
        }
        self.split = split;
        Ok(self)
    }

    /// Overrides the class count (labels must stay below it).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if self.labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label outside [0, {num_classes})"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Arc<SparsePattern> {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<S> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn nodes_in(&self, part: Split) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.split[i] == part)
            .collect()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i)
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.adjacency.entries().filter(|(i, j)| i < j).collect()
    }

    /// Number of stored directed entries (twice the undirected edge count).
    pub fn num_directed_edges(&self) -> usize {
        self.adjacency.nnz()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }
}

pub fn features_from_rows<S: Scalar>(rows: &[Vec<S>]) -> Result<Array2<S>> {
    let width = rows.first().map_or(0, Vec::len);
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::RaggedFeatures {
            row,
            expected: width,
            found: r.len(),
        });
    }
    let flat: Vec<S> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), width), flat).expect("rectangular rows"))
}

/// Binary reachability within `k` hops, diagonal excluded.
///
/// The stored entries double as the `2 x N_k` edge index: column `c` is
/// `(rows()[c], cols()[c])`, sorted by `(row, col)`.
#[derive(Debug, Clone)]
pub struct KHopAdjacency {
    k: usize,
    pattern: Arc<SparsePattern>,
}

impl KHopAdjacency {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    /// Number of stored entries `N_k`.
    pub fn len(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.nnz() == 0
    }

    pub fn sources(&self) -> &[usize] {
        self.pattern.rows()
    }

    pub fn targets(&self) -> &[usize] {
        self.pattern.cols()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.pattern.row(i)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pattern.contains(i, j)
    }
}

pub fn k_hop<S: Scalar>(graph: &Graph<S>, k: usize) -> Result<KHopAdjacency> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "hop count k must be at least 1".into(),
        ));
    }
    if k == 1 {
        return Ok(KHopAdjacency {
            k,
            pattern: Arc::clone(graph.adjacency()),
        });
    }
    let n = graph.num_nodes();
    let mut depth = vec![usize::MAX; n];
    let mut touched = Vec::new();
    let mut entries = Vec::new();
    let mut queue = VecDeque::new();
    for src in 0..n {
        depth[src] = 0;
        touched.push(src);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            if depth[u] == k {
                continue;
            }
            for &v in graph.neighbors(u) {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    touched.push(v);
                    queue.push_back(v);
                    entries.push((src, v));
                }
            }
        }
        for &t in &touched {
            depth[t] = usize::MAX;
        }
        touched.clear();
    }
    Ok(KHopAdjacency {
        k,
        pattern: Arc::new(SparsePattern::from_entries(n, n, entries)?),
    })
}

/// Per-node negative candidates `P_n(i)` drawn from the off-diagonal
/// complement of the k-hop adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeCandidates {
    per_node: Vec<Vec<usize>>,
    shortfall: Vec<usize>,
    isolated: Vec<usize>,
}

impl NegativeCandidates {
    pub fn of(&self, i: usize) -> &[usize] {
        &self.per_node[i]
    }

    pub fn per_node(&self) -> &[Vec<usize>] {
        &self.per_node
    }

    /// Nodes whose complement held fewer candidates than k-hop neighbours.
    pub fn shortfall(&self) -> &[usize] {
        &self.shortfall
    }

    /// Nodes without any k-hop neighbour.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    /// Flattened `(i, j)` pairs in node order; the row order of `M_sneg`.
    pub fn pairs(&self) -> (Vec<usize>, Vec<usize>) {
        self.per_node
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
            .unzip()
    }

    pub fn total(&self) -> usize {
        self.per_node.iter().map(Vec::len).sum()
    }
}

pub fn negative_candidates<S: Scalar>(
    graph: &Graph<S>,
    khop: &KHopAdjacency,
    seed: u64,
) -> NegativeCandidates {
    let n = graph.num_nodes();
    let labels = graph.labels();
    let split = graph.split();
    let mut rng = rng::substream(seed, rng::NEGATIVES);
    let mut blocked = vec![false; n];
    let mut per_node = Vec::with_capacity(n);
    let mut shortfall = Vec::new();
    let mut isolated = Vec::new();
    let mut pool = Vec::with_capacity(n);
    for i in 0..n {
        let need = khop.neighbors(i).len();
        if need == 0 {
            isolated.push(i);
            per_node.push(Vec::new());
            continue;
        }
        for &j in khop.neighbors(i) {
            blocked[j] = true;
        }
        let i_train = split[i] == Split::Train;
        pool.clear();
        pool.extend((0..n).filter(|&j| {
            j != i
                && !blocked[j]
                && !(i_train && split[j] == Split::Train && labels[j] == labels[i])
        }));
        for &j in khop.neighbors(i) {
            blocked[j] = false;
        }
        let take = need.min(pool.len());
        if take < need {
            shortfall.push(i);
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, pool.len(), take)
            .into_iter()
            .map(|p| pool[p])
            .collect();
        chosen.sort_unstable();
        per_node.push(chosen);
    }
    if !isolated.is_empty() {
        log::warn!("{} nodes have no k-hop neighbours", isolated.len());
    }
    if !shortfall.is_empty() {
        log::warn!(
            "{} nodes have fewer negative candidates than neighbours",
            shortfall.len()
        );
    }
    NegativeCandidates {
        per_node,
        shortfall,
        isolated,
    }
}

/// Seeded random train/val/test partition. Validation and test sizes are
/// floored; the remainder goes to training.
pub fn random_split(num_nodes: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Vec<Split>> {
    let (train, val, test) = ratios;
    if [train, val, test].iter().any(|&r| r.is_nan() || r <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    if ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {ratios:?}"
        )));
    }
    let count = |r: f64| ((num_nodes as f64) * r + 1e-9).floor() as usize;
    let (n_val, n_test) = (count(val), count(test));
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.shuffle(&mut rng::substream(seed, rng::SPLITS));
    let mut tags = vec![Split::Train; num_nodes];
    for &i in &order[..n_val] {
        tags[i] = Split::Val;
    }
    for &i in &order[n_val..n_val + n_test] {
        tags[i] = Split::Test;
    }
    Ok(tags)
}
