//! Accuracy, explanation AUC, Fidelity+ and embedding cluster statistics.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::datasets::GroundTruth;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{SparseMatrix, SparsePattern};

/// Row argmax, ties going to the lowest class.
pub fn argmax<S: Scalar>(row: ArrayView1<S>) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

pub fn predictions<S: Scalar>(logits: &Array2<S>) -> Vec<usize> {
    logits.rows().into_iter().map(argmax).collect()
}

pub fn accuracy<S: Scalar>(logits: &Array2<S>, labels: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(
            "accuracy over an empty node set".into(),
        ));
    }
    let correct = nodes
        .iter()
        .filter(|&&i| argmax(logits.row(i)) == labels[i])
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

/// Which k-hop entries enter the AUC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucCandidates {
    /// Entries `(i, j)` whose source `i` lies on a motif.
    #[default]
    MotifIncident,
    AllKHop,
    /// Graph edges (1-hop) whose source lies on a motif.
    MotifEdges,
}

/// ROC-AUC as the normalized Mann-Whitney statistic with midranks. `None`
/// when only one label is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[start..=end].iter().filter(|&&k| labels[k]).count() as f64;
        start = end + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Scores and labels of the candidate edges. Scores are the larger of the two
/// directed `E_sub` weights.
pub fn auc_inputs<S: Scalar>(
    subgraph: &SparseMatrix<S>,
    adjacency: &SparsePattern,
    truth: &GroundTruth,
    mode: AucCandidates,
) -> (Vec<f64>, Vec<bool>) {
    let motif_nodes = truth.motif_nodes();
    let pattern = subgraph.pattern();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, j) in pattern.entries() {
        let keep = match mode {
            AucCandidates::MotifIncident => motif_nodes.contains(&i),
            AucCandidates::AllKHop => true,
            AucCandidates::MotifEdges => motif_nodes.contains(&i) && adjacency.contains(i, j),
        };
        if !keep {
            continue;
        }
        scores.push(subgraph.get(i, j).max(subgraph.get(j, i)).as_f64());
        labels.push(truth.is_motif_edge(i, j));
    }
    (scores, labels)
}

pub fn explanation_auc<S: Scalar>(
    subgraph: &SparseMatrix<S>,
    adjacency: &SparsePattern,
    truth: &GroundTruth,
    mode: AucCandidates,
) -> Option<f64> {
    let (scores, labels) = auc_inputs(subgraph, adjacency, truth, mode);
    roc_auc(&scores, &labels)
}

/// Copy of `x` with each row's `top_t` most important features (by the
/// matching row of `importance`, ties to lower index) set to zero.
pub fn remove_top_features<S: Scalar>(
    x: &Array2<S>,
    importance: &Array2<S>,
    top_t: usize,
) -> Array2<S> {
    let mut out = x.clone();
    for (i, row) in importance.rows().into_iter().enumerate() {
        let mut dims: Vec<usize> = (0..row.len()).collect();
        dims.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &d in dims.iter().take(top_t) {
            out[[i, d]] = S::zero();
        }
    }
    out
}

/// Mean over `nodes` of `1(ŷ = y) - 1(ŷ' = y)`, where `ŷ'` is predicted from
/// features with each node's top `top_t` explanation features removed.
pub fn fidelity_plus<S, F>(
    predict: F,
    x: &Array2<S>,
    importance: &Array2<S>,
    labels: &[usize],
    nodes: &[usize],
    top_t: usize,
) -> Result<f64>
where
    S: Scalar,
    F: Fn(&Array2<S>) -> Result<Array2<S>>,
{
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(
            "fidelity over an empty node set".into(),
        ));
    }
    if top_t == 0 {
        return Ok(0.0);
    }
    let before = predictions(&predict(x)?);
    let after = predictions(&predict(&remove_top_features(x, importance, top_t))?);
    let total: i64 = nodes
        .iter()
        .map(|&i| i64::from(before[i] == labels[i]) - i64::from(after[i] == labels[i]))
        .sum();
    Ok(total as f64 / nodes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub silhouette: f64,
    pub calinski_harabasz: f64,
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Silhouette and Calinski-Harabasz scores of `embeddings` rows in `nodes`
/// grouped by label. Classes with one member are dropped; `None` when fewer
/// than two classes remain.
pub fn cluster_stats<S: Scalar>(
    embeddings: &Array2<S>,
    labels: &[usize],
    nodes: &[usize],
) -> Option<ClusterStats> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in nodes {
        groups.entry(labels[i]).or_default().push(i);
    }
    groups.retain(|class, members| {
        if members.len() < 2 {
            log::warn!("cluster stats: class {class} has a single member, skipped");
        }
        members.len() >= 2
    });
    if groups.len() < 2 {
        return None;
    }
    let points: Vec<(usize, usize)> = groups
        .values()
        .enumerate()
        .flat_map(|(g, m)| m.iter().map(move |&i| (g, i)))
        .collect();
    let x = embeddings.mapv(|v| v.as_f64());
    let k = groups.len();
    let n = points.len();

    let mut silhouette = 0.0;
    for &(g, i) in &points {
        let mut sums = vec![0.0; k];
        for &(h, j) in &points {
            if i != j {
                sums[h] += dist(x.row(i), x.row(j));
            }
        }
        let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
        let a = sums[g] / (sizes[g] - 1) as f64;
        let b = (0..k)
            .filter(|&h| h != g)
            .map(|h| sums[h] / sizes[h] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            silhouette += (b - a) / denom;
        }
    }
    silhouette /= n as f64;

    let d = x.ncols();
    let centroid = |members: &[usize]| {
        let mut c = vec![0.0; d];
        for &i in members {
            for (c, v) in c.iter_mut().zip(x.row(i)) {
                *c += v;
            }
        }
        c.iter_mut().for_each(|c| *c /= members.len() as f64);
        c
    };
    let all: Vec<usize> = points.iter().map(|p| p.1).collect();
    let overall = centroid(&all);
    let (mut between, mut within) = (0.0, 0.0);
    for members in groups.values() {
        let c = centroid(members);
        between += members.len() as f64
            * c.iter()
                .zip(&overall)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        for &i in members {
            within += x
                .row(i)
                .iter()
                .zip(&c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    let calinski_harabasz = if within == 0.0 {
        1.0
    } else {
        between * (n - k) as f64 / (within * (k - 1) as f64)
    };
    Some(ClusterStats {
        silhouette,
        calinski_harabasz,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calinski_harabasz: Option<f64>,
}

impl MetricsReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        [
            ("test_accuracy", self.test_accuracy),
            ("explanation_auc", self.explanation_auc),
            ("fidelity_plus", self.fidelity_plus),
            ("silhouette", self.silhouette),
            ("calinski_harabasz", self.calinski_harabasz),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    pub fn table(&self) -> String {
        self.rows()
            .iter()
            .map(|(k, v)| format!("{k:<18} {v:.4}\n"))
            .collect()
    }
}
