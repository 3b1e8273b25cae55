//! Synthetic benchmarks with planted motifs, and file loaders.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    BaShapes,
    BaCommunity,
    TreeCycle,
    TreeGrid,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        Self::BaShapes,
        Self::BaCommunity,
        Self::TreeCycle,
        Self::TreeGrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BaShapes => "ba_shapes",
            Self::BaCommunity => "ba_community",
            Self::TreeCycle => "tree_cycle",
            Self::TreeGrid => "tree_grid",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Self::BaShapes => 4,
            Self::BaCommunity => 8,
            Self::TreeCycle | Self::TreeGrid => 2,
        }
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset kind {s:?}")))
    }
}

/// Generator parameters. `base_size` is the BA node count for the BA kinds
/// and ignored by the tree kinds, which use `tree_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub base_size: usize,
    pub motif_count: usize,
    pub seed: u64,
    pub perturbation: f64,
    pub attachment_degree: usize,
    pub tree_depth: u32,
    pub feature_dim: usize,
    pub community_separation: f64,
    pub inter_density: f64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, seed: u64) -> Self {
        Self {
            kind,
            base_size: 300,
            motif_count: 80,
            seed,
            perturbation: 0.1,
            attachment_degree: 5,
            tree_depth: 8,
            feature_dim: 10,
            community_separation: 1.0,
            inter_density: 0.01,
        }
    }
}

/// Planted explanation: undirected motif edges stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub motif_edges: BTreeSet<(usize, usize)>,
    pub roles: Vec<usize>,
}

impl GroundTruth {
    pub fn is_motif_edge(&self, i: usize, j: usize) -> bool {
        self.motif_edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn motif_nodes(&self) -> BTreeSet<usize> {
        self.motif_edges.iter().flat_map(|&(i, j)| [i, j]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub graph: Graph<S>,
    pub ground_truth: Option<GroundTruth>,
}

/// Undirected edge builder that ignores self-loops and duplicates.
#[derive(Debug, Default)]
struct EdgeSet {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    fn add(&mut self, i: usize, j: usize) -> bool {
        i != j && self.edges.insert((i.min(j), i.max(j)))
    }

    fn add_nodes(&mut self, k: usize) -> usize {
        let first = self.n;
        self.n += k;
        first
    }
}

/// Preferential attachment in the networkx style: a star on `m + 1` nodes,
/// then each new node links to `m` distinct targets drawn proportionally
/// to degree.
fn barabasi_albert(g: &mut EdgeSet, n: usize, m: usize, rng: &mut Rng) -> Result<usize> {
    if m == 0 || n <= m {
        return Err(Error::InvalidArgument(format!(
            "BA graph needs 0 < m < n (m={m}, n={n})"
        )));
    }
    let first = g.add_nodes(n);
    let mut repeated = Vec::new();
    for v in 1..=m {
        g.add(first, first + v);
        repeated.extend([first, first + v]);
    }
    for v in m + 1..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(*repeated.choose(rng).expect("nonempty"));
        }
        for &t in &targets {
            g.add(first + v, t);
            repeated.extend([t, first + v]);
        }
    }
    Ok(first)
}

fn balanced_tree(g: &mut EdgeSet, depth: u32) -> (usize, usize) {
    let n = (1usize << (depth + 1)) - 1;
    let first = g.add_nodes(n);
    for v in 1..n {
        g.add(first + (v - 1) / 2, first + v);
    }
    (first, n)
}

/// Local edges and per-node roles of one motif.
struct Motif {
    edges: Vec<(usize, usize)>,
    roles: Vec<usize>,
}

fn house() -> Motif {
    Motif {
        edges: vec![(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)],
        // middle, middle, bottom, bottom, top
        roles: vec![2, 2, 3, 3, 1],
    }
}

fn cycle(len: usize) -> Motif {
    Motif {
        edges: (0..len).map(|i| (i, (i + 1) % len)).collect(),
        roles: vec![1; len],
    }
}

fn grid(side: usize) -> Motif {
    let id = |r: usize, c: usize| r * side + c;
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < side {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Motif {
        edges,
        roles: vec![1; side * side],
    }
}

/// Appends `count` copies of `motif`, each tied to a uniformly random base
/// node by one edge from its local node 0.
fn attach_motifs(
    g: &mut EdgeSet,
    roles: &mut Vec<usize>,
    truth: &mut BTreeSet<(usize, usize)>,
    motif: &Motif,
    count: usize,
    base: std::ops::Range<usize>,
    rng: &mut Rng,
) {
    for _ in 0..count {
        let first = g.add_nodes(motif.roles.len());
        roles.extend_from_slice(&motif.roles);
        for &(a, b) in &motif.edges {
            g.add(first + a, first + b);
            truth.insert((first + a.min(b), first + a.max(b)));
        }
        g.add(first, rng.random_range(base.clone()));
    }
}

/// Adds `round(fraction * |E|)` new uniformly random edges.
fn perturb(g: &mut EdgeSet, fraction: f64, rng: &mut Rng) {
    let target = (fraction * g.edges.len() as f64).round() as usize;
    let capacity = g.n * g.n.saturating_sub(1) / 2 - g.edges.len();
    let mut added = 0;
    while added < target.min(capacity) {
        if g.add(rng.random_range(0..g.n), rng.random_range(0..g.n)) {
            added += 1;
        }
    }
}

fn finish<S: Scalar>(
    g: EdgeSet,
    features: Array2<S>,
    labels: Vec<usize>,
    num_classes: usize,
    motif_edges: BTreeSet<(usize, usize)>,
) -> Result<Dataset<S>> {
    let edges: Vec<_> = g.edges.into_iter().collect();
    let graph = Graph::new(g.n, &edges, features, labels.clone())?.with_num_classes(num_classes)?;
    assert!(graph.is_connected(), "generated graph is disconnected");
    Ok(Dataset {
        graph,
        ground_truth: Some(GroundTruth {
            motif_edges,
            roles: labels,
        }),
    })
}

/// Roles, motif edges and the node range of the BA base.
type Component = (Vec<usize>, BTreeSet<(usize, usize)>, std::ops::Range<usize>);

fn shapes_component(spec: &SyntheticSpec, g: &mut EdgeSet, rng: &mut Rng) -> Result<Component> {
    let first = barabasi_albert(g, spec.base_size, spec.attachment_degree, rng)?;
    let base = first..first + spec.base_size;
    let mut roles = vec![0; spec.base_size];
    let mut truth = BTreeSet::new();
    attach_motifs(
        g,
        &mut roles,
        &mut truth,
        &house(),
        spec.motif_count,
        base.clone(),
        rng,
    );
    Ok((roles, truth, base))
}

pub fn generate<S: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<S>> {
    if !(0.0..=1.0).contains(&spec.perturbation) || !(0.0..=1.0).contains(&spec.inter_density) {
        return Err(Error::InvalidArgument(
            "perturbation and inter_density must be in [0, 1]".into(),
        ));
    }
    if spec.feature_dim == 0 {
        return Err(Error::InvalidArgument(
            "feature_dim must be positive".into(),
        ));
    }
    let mut rng = rng::substream(spec.seed, rng::GENERATOR);
    let mut g = EdgeSet::default();
    let classes = spec.kind.num_classes();
    match spec.kind {
        SyntheticKind::BaShapes => {
            let (roles, truth, _) = shapes_component(spec, &mut g, &mut rng)?;
            perturb(&mut g, spec.perturbation, &mut rng);
            let x = Array2::ones((g.n, spec.feature_dim));
            finish(g, x, roles, classes, truth)
        }
        SyntheticKind::BaCommunity => {
            let (mut roles, mut truth, base_a) = shapes_component(spec, &mut g, &mut rng)?;
            let half = g.n;
            let (roles_b, truth_b, base_b) = shapes_component(spec, &mut g, &mut rng)?;
            roles.extend(roles_b.iter().map(|r| r + 4));
            truth.extend(truth_b);
            perturb(&mut g, spec.perturbation, &mut rng);
            let mut linked = false;
            for i in base_a.clone() {
                for j in base_b.clone() {
                    if rng.random_bool(spec.inter_density) {
                        linked |= g.add(i, j) || g.edges.contains(&(i, j));
                    }
                }
            }
            if !linked {
                g.add(base_a.start, base_b.start);
            }
            let noise = Normal::new(0.0, 1.0).expect("unit normal");
            let x = Array2::from_shape_fn((g.n, spec.feature_dim), |(i, _)| {
                let mean = if i < half {
                    0.0
                } else {
                    spec.community_separation
                };
                S::of(mean + noise.sample(&mut rng))
            });
            finish(g, x, roles, classes, truth)
        }
        SyntheticKind::TreeCycle | SyntheticKind::TreeGrid => {
            let (first, n) = balanced_tree(&mut g, spec.tree_depth);
            let mut roles = vec![0; n];
            let mut truth = BTreeSet::new();
            let motif = if spec.kind == SyntheticKind::TreeCycle {
                cycle(6)
            } else {
                grid(3)
            };
            attach_motifs(
                &mut g,
                &mut roles,
                &mut truth,
                &motif,
                spec.motif_count,
                first..first + n,
                &mut rng,
            );
            perturb(&mut g, spec.perturbation, &mut rng);
            let x = Array2::ones((g.n, spec.feature_dim));
            finish(g, x, roles, classes, truth)
        }
    }
}

/// On-disk graph schema. Missing `features` means identity features;
/// missing `split` leaves every node in training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Vec<Split>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_edges: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<Vec<usize>>,
}

fn identity<S: Scalar>(n: usize) -> Array2<S> {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { S::one() } else { S::zero() })
}

impl GraphFile {
    pub fn from_dataset<S: Scalar>(data: &Dataset<S>, with_split: bool) -> Self {
        let g = &data.graph;
        Self {
            num_nodes: g.num_nodes(),
            edges: g.undirected_edges(),
            features: Some(
                g.features()
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|v| v.as_f64()).collect())
                    .collect(),
            ),
            labels: g.labels().to_vec(),
            num_classes: Some(g.num_classes()),
            split: with_split.then(|| g.split().to_vec()),
            ground_truth_edges: data
                .ground_truth
                .as_ref()
                .map(|t| t.motif_edges.iter().copied().collect()),
            roles: data.ground_truth.as_ref().map(|t| t.roles.clone()),
        }
    }

    pub fn into_dataset<S: Scalar>(self) -> Result<Dataset<S>> {
        let features = match &self.features {
            Some(rows) => {
                let rows: Vec<Vec<S>> = rows
                    .iter()
                    .map(|r| r.iter().map(|&v| S::of(v)).collect())
                    .collect();
                crate::graph::features_from_rows(&rows)?
            }
            None => identity(self.num_nodes),
        };
        let mut graph = Graph::new(self.num_nodes, &self.edges, features, self.labels)?;
        if let Some(c) = self.num_classes {
            graph = graph.with_num_classes(c)?;
        }
        if let Some(split) = self.split {
            graph = graph.with_split(split)?;
        }
        let ground_truth = match (self.ground_truth_edges, self.roles) {
            (None, None) => None,
            (Some(edges), Some(roles)) => {
                if roles.len() != graph.num_nodes() {
                    return Err(Error::LengthMismatch {
                        what: "roles",
                        expected: graph.num_nodes(),
                        found: roles.len(),
                    });
                }
                let motif_edges: BTreeSet<_> = edges
                    .into_iter()
                    .map(|(i, j)| (i.min(j), i.max(j)))
                    .collect();
                if let Some(&(i, j)) = motif_edges
                    .iter()
                    .find(|&&(i, j)| !graph.adjacency().contains(i, j))
                {
                    return Err(Error::InvalidArgument(format!(
                        "ground-truth edge ({i}, {j}) is not a graph edge"
                    )));
                }
                Some(GroundTruth { motif_edges, roles })
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "ground_truth_edges and roles must be given together".into(),
                ))
            }
        };
        Ok(Dataset {
            graph,
            ground_truth,
        })
    }
}

pub fn load_json_graph<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GraphFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    file.into_dataset()
}

pub fn save_json_graph<S: Scalar>(path: &Path, data: &Dataset<S>, with_split: bool) -> Result<()> {
    let text = serde_json::to_string(&GraphFile::from_dataset(data, with_split)).map_err(|e| {
        Error::Json {
            path: path.to_path_buf(),
            source: e,
        }
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank, non-`#` lines split on whitespace, with 1-based line numbers.
fn records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.split_whitespace().map(str::to_owned).collect()))
        .collect())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_pair(path: &Path, line: usize, fields: &[String], what: &str) -> Result<(usize, usize)> {
    if fields.len() != 2 {
        return Err(parse_err(
            path,
            line,
            format!("expected 2 fields ({what}), found {}", fields.len()),
        ));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(path, line, format!("{s:?} is not a node id")))
    };
    Ok((num(&fields[0])?, num(&fields[1])?))
}

/// Whitespace-separated `u v` edge list with 0-based ids. `labels` holds
/// `node label` lines; `features` holds one row of numbers per node. Without
/// features every node gets a one-hot identity row.
pub fn load_edge_list<S: Scalar>(
    edges: &Path,
    labels: Option<&Path>,
    features: Option<&Path>,
) -> Result<Graph<S>> {
    let edge_list = records(edges)?
        .iter()
        .map(|(line, f)| parse_pair(edges, *line, f, "source target"))
        .collect::<Result<Vec<_>>>()?;
    let label_pairs = match labels {
        Some(p) => records(p)?
            .iter()
            .map(|(line, f)| parse_pair(p, *line, f, "node label"))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let feature_rows = match features {
        Some(p) => Some(
            records(p)?
                .iter()
                .map(|(line, f)| {
                    f.iter()
                        .map(|s| {
                            s.parse::<f64>()
                                .map(S::of)
                                .map_err(|_| parse_err(p, *line, format!("{s:?} is not a number")))
                        })
                        .collect::<Result<Vec<S>>>()
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let n = edge_list
        .iter()
        .flat_map(|&(i, j)| [i, j])
        .chain(label_pairs.iter().map(|p| p.0))
        .max()
        .map_or(0, |m| m + 1)
        .max(feature_rows.as_ref().map_or(0, Vec::len));
    let mut node_labels = vec![0; n];
    for &(i, l) in &label_pairs {
        node_labels[i] = l;
    }
    let x = match feature_rows {
        Some(rows) => {
            if rows.len() != n {
                return Err(Error::LengthMismatch {
                    what: "feature rows",
                    expected: n,
                    found: rows.len(),
                });
            }
            crate::graph::features_from_rows(&rows)?
        }
        None => identity(n),
    };
    Graph::new(n, &edge_list, x, node_labels)
}
