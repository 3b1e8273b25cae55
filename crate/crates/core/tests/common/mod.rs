//! Brute-force oracles and the properties checked against them.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;
use ses_core::autodiff::{ParamStore, Tape};
use ses_core::datasets::GroundTruth;
use ses_core::encoder::{
    encode, normalize, normalize_matrix, EncoderParams, NormalizedAdjacency, SelfLoops,
};
use ses_core::graph::{k_hop, negative_candidates, Graph, Split};
use ses_core::metrics::{accuracy, explanation_auc, roc_auc, AucCandidates};
use ses_core::pairs::{build_pairs, sample_count};
use ses_core::rng::substream;
use ses_core::sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct RandomGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    labels: Vec<usize>,
    split: Vec<Split>,
}

impl RandomGraph {
    fn graph(&self, features: Array2<f64>) -> Graph<f64> {
        Graph::new(self.n, &self.edges, features, self.labels.clone())
            .unwrap()
            .with_split(self.split.clone())
            .unwrap()
    }

    fn dense_adjacency(&self) -> Vec<Vec<bool>> {
        let mut a = vec![vec![false; self.n]; self.n];
        for &(i, j) in &self.edges {
            if i != j {
                a[i][j] = true;
                a[j][i] = true;
            }
        }
        a
    }
}

pub fn random_graph(max_nodes: usize) -> impl Strategy<Value = RandomGraph> {
    (2..=max_nodes).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..=3 * n),
            prop::collection::vec(0..3usize, n),
            prop::collection::vec(
                prop_oneof![Just(Split::Train), Just(Split::Val), Just(Split::Test)],
                n,
            ),
        )
            .prop_map(|(n, edges, labels, split)| RandomGraph {
                n,
                edges,
                labels,
                split,
            })
    })
}

/// Reachability within `k` hops by repeated boolean matrix products.
fn khop_oracle(a: &[Vec<bool>], k: usize) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut reach = a.to_vec();
    let mut power = a.to_vec();
    for _ in 1..k {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for m in 0..n {
                if power[i][m] {
                    for j in 0..n {
                        next[i][j] |= a[m][j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                reach[i][j] |= next[i][j];
            }
        }
        power = next;
    }
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = false;
    }
    reach
}

fn bfs_distances(a: &[Vec<bool>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; a.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for v in 0..a.len() {
            if a[u][v] && dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

fn dense(m: &SparseMatrix<f64>, n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; n];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in m.row(i) {
            row[j] = v;
        }
    }
    out
}

fn dense_normalized(a: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let deg: Vec<f64> = a
        .iter()
        .map(|r| r.iter().filter(|&&b| b).count() as f64 + 1.0)
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let w = if i == j || a[i][j] { 1.0 } else { 0.0 };
                    w / (deg[i].sqrt() * deg[j].sqrt())
                })
                .collect()
        })
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|m| row[m] * b[m][j]).sum())
                .collect()
        })
        .collect()
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn close(a: &[Vec<f64>], b: &Array2<f64>, tol: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.len(), b.nrows());
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let y = b[[i, j]];
            prop_assert!(
                (x - y).abs() <= tol * (1.0 + x.abs()),
                "({}, {}): {} vs {}",
                i,
                j,
                x,
                y
            );
        }
    }
    Ok(())
}

fn concordance(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice = 0u64;
    for &p in &pos {
        for &q in &neg {
            twice += if p > q {
                2
            } else if p == q {
                1
            } else {
                0
            };
        }
    }
    Some(twice as f64 / 2.0 / (pos.len() * neg.len()) as f64)
}

fn features(n: usize, f: usize, seed: u64) -> Array2<f64> {
    use rand::Rng;
    let mut rng = substream(seed, "test-features");
    Array2::from_shape_fn((n, f), |_| rng.random_range(-1.0..1.0))
}

fn encode_values(
    g: &Graph<f64>,
    store: &ParamStore<f64>,
    params: &EncoderParams,
) -> (Array2<f64>, Array2<f64>) {
    let tape = Tape::new();
    let adj = normalize_matrix(&SparseMatrix::ones(Arc::clone(g.adjacency()))).unwrap();
    let norm = NormalizedAdjacency {
        pattern: Arc::clone(adj.pattern()),
        values: tape.constant(
            Array2::from_shape_vec((adj.values().len(), 1), adj.values().to_vec()).unwrap(),
        ),
    };
    let x = tape.constant(g.features().clone());
    let out = encode(&tape, &norm, x, &params.bind(&tape, store)).unwrap();
    (tape.value(out.hidden), tape.value(out.logits))
}

pub fn k_hop_matches_matrix_power_and_bfs(rg: &RandomGraph, k: usize) -> Result<(), TestCaseError> {
    let g = rg.graph(Array2::zeros((rg.n, 1)));
    let kh = k_hop(&g, k).unwrap();
    let a = rg.dense_adjacency();
    let oracle = khop_oracle(&a, k);
    for i in 0..rg.n {
        let dist = bfs_distances(&a, i);
        for j in 0..rg.n {
            let by_bfs = i != j && dist[j].is_some_and(|d| d <= k);
            prop_assert_eq!(oracle[i][j], by_bfs);
            prop_assert_eq!(kh.contains(i, j), by_bfs, "({}, {}) k={}", i, j, k);
        }
    }
    let listed: Vec<(usize, usize)> = kh
        .sources()
        .iter()
        .copied()
        .zip(kh.targets().iter().copied())
        .collect();
    let mut sorted = listed.clone();
    sorted.sort_unstable();
    sorted.dedup();
    prop_assert_eq!(listed, sorted);
    if k == 1 {
        prop_assert_eq!(kh.pattern().as_ref(), g.adjacency().as_ref());
    }
    Ok(())
}

pub fn negative_candidates_match_complement(
    rg: &RandomGraph,
    k: usize,
    seed: u64,
) -> Result<(), TestCaseError> {
    let g = rg.graph(Array2::zeros((rg.n, 1)));
    let kh = k_hop(&g, k).unwrap();
    let reach = khop_oracle(&rg.dense_adjacency(), k);
    let neg = negative_candidates(&g, &kh, seed);
    for i in 0..rg.n {
        let need = reach[i].iter().filter(|&&b| b).count();
        let pool: BTreeSet<usize> = (0..rg.n)
            .filter(|&j| j != i && !reach[i][j])
            .filter(|&j| {
                !(rg.split[i] == Split::Train
                    && rg.split[j] == Split::Train
                    && rg.labels[i] == rg.labels[j])
            })
            .collect();
        let got = neg.of(i);
        let set: BTreeSet<usize> = got.iter().copied().collect();
        prop_assert_eq!(set.len(), got.len());
        prop_assert!(set.is_subset(&pool));
        prop_assert_eq!(got.len(), need.min(pool.len()));
        prop_assert_eq!(neg.shortfall().contains(&i), need > pool.len());
    }
    prop_assert_eq!(negative_candidates(&g, &kh, seed), neg);
    Ok(())
}

pub fn build_pairs_matches_selection_oracle(
    rg: &RandomGraph,
    k: usize,
    ratio: f64,
    levels: u32,
    seed: u64,
) -> Result<(), TestCaseError> {
    use rand::Rng;
    let g = rg.graph(Array2::zeros((rg.n, 1)));
    let kh = k_hop(&g, k).unwrap();
    let neg = negative_candidates(&g, &kh, seed);
    let mut rng = substream(seed, "test-weights");
    // Few distinct levels so ties are common.
    let weights: Vec<f64> = (0..kh.len())
        .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
        .collect();
    let pairs = build_pairs(&weights, &kh, &neg, ratio, seed).unwrap();
    for i in 0..rg.n {
        let mut remaining: Vec<(usize, f64)> = kh
            .pattern()
            .entries()
            .zip(weights.iter())
            .filter(|&((r, _), _)| r == i)
            .map(|((_, c), &w)| (c, w))
            .collect();
        let count = ((ratio * remaining.len() as f64) + 1e-9).floor() as usize;
        prop_assert_eq!(sample_count(ratio, remaining.len()), count);
        let take = count.min(neg.of(i).len());
        let mut expected = Vec::new();
        for _ in 0..take {
            // Largest weight, lowest id among equals.
            let best = (0..remaining.len())
                .max_by(|&a, &b| {
                    remaining[a]
                        .1
                        .partial_cmp(&remaining[b].1)
                        .unwrap()
                        .then(remaining[b].0.cmp(&remaining[a].0))
                })
                .unwrap();
            expected.push(remaining.remove(best).0);
        }
        prop_assert_eq!(pairs.positives(i), expected.as_slice());
        let drawn: BTreeSet<usize> = pairs.negatives(i).iter().copied().collect();
        prop_assert_eq!(drawn.len(), take);
        prop_assert!(pairs.negatives(i).iter().all(|j| neg.of(i).contains(j)));
    }
    prop_assert_eq!(
        build_pairs(&weights, &kh, &neg, ratio, seed).unwrap(),
        pairs
    );
    Ok(())
}

pub fn roc_auc_matches_concordant_pairs(data: &[(u8, bool)]) -> Result<(), TestCaseError> {
    let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 8.0).collect();
    let labels: Vec<bool> = data.iter().map(|&(_, l)| l).collect();
    prop_assert_eq!(roc_auc(&scores, &labels), concordance(&scores, &labels));
    Ok(())
}

pub fn explanation_auc_matches_concordant_pairs(
    rg: &RandomGraph,
    k: usize,
    seed: u64,
) -> Result<(), TestCaseError> {
    use rand::Rng;
    let g = rg.graph(Array2::zeros((rg.n, 1)));
    let kh = k_hop(&g, k).unwrap();
    let mut rng = substream(seed, "test-auc");
    let values: Vec<f64> = (0..kh.len())
        .map(|_| rng.random_range(0..5u8) as f64 / 4.0)
        .collect();
    let e_sub = SparseMatrix::new(Arc::clone(kh.pattern()), values).unwrap();
    let motif_edges: BTreeSet<(usize, usize)> = g
        .undirected_edges()
        .into_iter()
        .filter(|_| rng.random_bool(0.3))
        .map(|(i, j)| (i.min(j), i.max(j)))
        .collect();
    let truth = GroundTruth {
        motif_edges: motif_edges.clone(),
        roles: vec![0; rg.n],
    };
    let motif_nodes: BTreeSet<usize> = motif_edges.iter().flat_map(|&(i, j)| [i, j]).collect();

    let e = dense(&e_sub, rg.n);
    let reach = khop_oracle(&rg.dense_adjacency(), k);
    let adj = rg.dense_adjacency();
    for mode in [
        AucCandidates::MotifIncident,
        AucCandidates::AllKHop,
        AucCandidates::MotifEdges,
    ] {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..rg.n {
            for j in 0..rg.n {
                let keep = reach[i][j]
                    && match mode {
                        AucCandidates::MotifIncident => motif_nodes.contains(&i),
                        AucCandidates::AllKHop => true,
                        AucCandidates::MotifEdges => motif_nodes.contains(&i) && adj[i][j],
                    };
                if keep {
                    scores.push(e[i][j].max(e[j][i]));
                    labels.push(motif_edges.contains(&(i.min(j), i.max(j))));
                }
            }
        }
        prop_assert_eq!(
            explanation_auc(&e_sub, g.adjacency(), &truth, mode),
            concordance(&scores, &labels)
        );
    }
    Ok(())
}

pub fn normalization_matches_dense_formula(rg: &RandomGraph) -> Result<(), TestCaseError> {
    let g = rg.graph(Array2::zeros((rg.n, 1)));
    let norm = normalize_matrix(&SparseMatrix::ones(Arc::clone(g.adjacency()))).unwrap();
    let oracle = dense_normalized(&rg.dense_adjacency());
    let got = dense(&norm, rg.n);
    for i in 0..rg.n {
        for j in 0..rg.n {
            prop_assert!((oracle[i][j] - got[i][j]).abs() <= 1e-15, "({}, {})", i, j);
        }
    }
    // The taped version agrees with the constant one.
    let tape = Tape::<f64>::new();
    let loops = SelfLoops::new(g.adjacency()).unwrap();
    let w = tape.constant(Array2::ones((g.adjacency().nnz(), 1)));
    let taped = normalize(&tape, &loops, w).unwrap();
    let values: Vec<f64> = tape.value(taped.values).iter().copied().collect();
    prop_assert_eq!(values, norm.values().to_vec());
    Ok(())
}

pub fn encode_matches_dense_oracle(
    rg: &RandomGraph,
    f: usize,
    hidden: usize,
    seed: u64,
    bias: bool,
) -> Result<(), TestCaseError> {
    let g = rg.graph(features(rg.n, f, seed));
    let mut store = ParamStore::new();
    let params =
        EncoderParams::register(&mut store, f, hidden, 3, bias, &mut substream(seed, "init"))
            .unwrap();
    if let (Some(b1), Some(b2)) = (params.b1, params.b2) {
        store.get_mut(b1).value.fill(0.25);
        store.get_mut(b2).value.fill(-0.5);
    }
    let (h, z) = encode_values(&g, &store, &params);

    let a_hat = dense_normalized(&rg.dense_adjacency());
    let x = to_rows(g.features());
    let w1 = to_rows(&store.get(params.w1).value);
    let w2 = to_rows(&store.get(params.w2).value);
    let add = |m: Vec<Vec<f64>>, b: Option<f64>| -> Vec<Vec<f64>> {
        m.into_iter()
            .map(|r| r.into_iter().map(|v| v + b.unwrap_or(0.0)).collect())
            .collect()
    };
    let h_oracle = add(matmul(&a_hat, &matmul(&x, &w1)), bias.then_some(0.25));
    let relu: Vec<Vec<f64>> = h_oracle
        .iter()
        .map(|r| r.iter().map(|&v| v.max(0.0)).collect())
        .collect();
    let z_oracle = add(matmul(&a_hat, &matmul(&relu, &w2)), bias.then_some(-0.5));
    close(&h_oracle, &h, 1e-12)?;
    close(&z_oracle, &z, 1e-12)?;
    Ok(())
}

pub fn encode_is_permutation_equivariant(rg: &RandomGraph, seed: u64) -> Result<(), TestCaseError> {
    use rand::seq::SliceRandom;
    let x = features(rg.n, 4, seed);
    let g = rg.graph(x.clone());
    let mut perm: Vec<usize> = (0..rg.n).collect();
    perm.shuffle(&mut substream(seed, "test-perm"));
    // Node i of the original becomes perm[i].
    let edges: Vec<(usize, usize)> = rg.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
    let mut px = Array2::zeros(x.raw_dim());
    let mut labels = vec![0; rg.n];
    for i in 0..rg.n {
        px.row_mut(perm[i]).assign(&x.row(i));
        labels[perm[i]] = rg.labels[i];
    }
    let pg = Graph::new(rg.n, &edges, px, labels).unwrap();
    let mut store = ParamStore::new();
    let params =
        EncoderParams::register(&mut store, 4, 5, 3, false, &mut substream(seed, "init")).unwrap();
    let (_, z) = encode_values(&g, &store, &params);
    let (_, pz) = encode_values(&pg, &store, &params);
    for i in 0..rg.n {
        for c in 0..3 {
            prop_assert!((z[[i, c]] - pz[[perm[i], c]]).abs() <= 1e-12);
        }
    }
    Ok(())
}

pub fn accuracy_invariant_under_increasing_transform(
    rows: &[Vec<f64>],
    labels_seed: u64,
) -> Result<(), TestCaseError> {
    use rand::Rng;
    let n = rows.len();
    let logits = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
    let mut rng = substream(labels_seed, "test-labels");
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let nodes: Vec<usize> = (0..n).collect();
    let transformed = logits.mapv(|v| (2.0 * v).exp() + 3.0);
    prop_assert_eq!(
        accuracy(&logits, &labels, &nodes).unwrap(),
        accuracy(&transformed, &labels, &nodes).unwrap()
    );
    Ok(())
}
