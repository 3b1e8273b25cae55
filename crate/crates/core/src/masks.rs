//! Global mask generator: feature mask from an MLP over the hidden layer,
//! structure masks from a shared edge scorer, and the explanations built
//! from them.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Owner, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, KHopAdjacency};
use crate::optim::xavier_uniform;
use crate::scalar::Scalar;
use crate::sparse::{SparseMatrix, SparsePattern};

/// MLP `F_hid -> F_hid -> F` for the feature mask, and one edge scorer
/// `W: 2 F_hid x 1`, `b: 1 x 1` shared by real and negative pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskGeneratorParams {
    pub mlp_w1: ParamId,
    pub mlp_b1: ParamId,
    pub mlp_w2: ParamId,
    pub mlp_b2: ParamId,
    pub edge_w: ParamId,
    pub edge_b: ParamId,
}

impl MaskGeneratorParams {
    pub fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        hidden: usize,
        num_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let g = Owner::MaskGenerator;
        Ok(Self {
            mlp_w1: store.add("mask.mlp_w1", g, xavier_uniform(hidden, hidden, rng))?,
            mlp_b1: store.add("mask.mlp_b1", g, Array2::zeros((1, hidden)))?,
            mlp_w2: store.add("mask.mlp_w2", g, xavier_uniform(hidden, num_features, rng))?,
            mlp_b2: store.add("mask.mlp_b2", g, Array2::zeros((1, num_features)))?,
            edge_w: store.add("mask.edge_w", g, xavier_uniform(2 * hidden, 1, rng))?,
            edge_b: store.add("mask.edge_b", g, Array2::zeros((1, 1)))?,
        })
    }

    pub fn from_store<S: Scalar>(store: &ParamStore<S>) -> Result<Self> {
        let need = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))
        };
        Ok(Self {
            mlp_w1: need("mask.mlp_w1")?,
            mlp_b1: need("mask.mlp_b1")?,
            mlp_w2: need("mask.mlp_w2")?,
            mlp_b2: need("mask.mlp_b2")?,
            edge_w: need("mask.edge_w")?,
            edge_b: need("mask.edge_b")?,
        })
    }

    pub fn bind<S: Scalar>(&self, tape: &Tape<S>, store: &ParamStore<S>) -> MaskVars {
        MaskVars {
            mlp_w1: tape.param(store, self.mlp_w1),
            mlp_b1: tape.param(store, self.mlp_b1),
            mlp_w2: tape.param(store, self.mlp_w2),
            mlp_b2: tape.param(store, self.mlp_b2),
            edge_w: tape.param(store, self.edge_w),
            edge_b: tape.param(store, self.edge_b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MaskVars {
    pub mlp_w1: Var,
    pub mlp_b1: Var,
    pub mlp_w2: Var,
    pub mlp_b2: Var,
    pub edge_w: Var,
    pub edge_b: Var,
}

/// `M_f = sigmoid(relu(H W1 + b1) W2 + b2)`, shape `N x F`.
pub fn feature_mask<S: Scalar>(tape: &Tape<S>, hidden: Var, vars: &MaskVars) -> Result<Var> {
    let inner = tape.relu(tape.add_bias_row(tape.matmul(hidden, vars.mlp_w1)?, vars.mlp_b1)?);
    let outer = tape.add_bias_row(tape.matmul(inner, vars.mlp_w2)?, vars.mlp_b2)?;
    Ok(tape.sigmoid(outer))
}

/// One score `sigmoid(W . [h_i ; h_j] + b)` per pair `(sources[c], targets[c])`.
///
/// `W` is split into its centre and neighbour halves so the product is taken
/// once per node instead of once per pair.
pub fn structure_mask<S: Scalar>(
    tape: &Tape<S>,
    hidden: Var,
    sources: &[usize],
    targets: &[usize],
    vars: &MaskVars,
) -> Result<Var> {
    if sources.len() != targets.len() {
        return Err(Error::LengthMismatch {
            what: "pair targets",
            expected: sources.len(),
            found: targets.len(),
        });
    }
    let width = tape.shape(hidden).1;
    let (w_rows, _) = tape.shape(vars.edge_w);
    if w_rows != 2 * width {
        return Err(Error::shape(
            "structure_mask",
            format!("edge scorer has {w_rows} rows for hidden width {width}"),
        ));
    }
    let center = tape.matmul(hidden, tape.slice_rows(vars.edge_w, 0, width)?)?;
    let neighbor = tape.matmul(hidden, tape.slice_rows(vars.edge_w, width, 2 * width)?)?;
    let logits = tape.add(
        tape.gather_rows(center, sources)?,
        tape.gather_rows(neighbor, targets)?,
    )?;
    Ok(tape.sigmoid(tape.add_bias_row(logits, vars.edge_b)?))
}

/// `M̂_s`: the structure-mask column laid over the k-hop pattern. The values
/// node is shared, so gradients through `M̂_s` reach `M_s`.
#[derive(Debug, Clone)]
pub struct TransferredMask {
    pub pattern: Arc<SparsePattern>,
    pub values: Var,
}

pub fn transfer<S: Scalar>(
    tape: &Tape<S>,
    structure: Var,
    khop: &KHopAdjacency,
) -> Result<TransferredMask> {
    let (rows, cols) = tape.shape(structure);
    if rows != khop.len() || cols != 1 {
        return Err(Error::LengthMismatch {
            what: "structure mask",
            expected: khop.len(),
            found: rows,
        });
    }
    Ok(TransferredMask {
        pattern: Arc::clone(khop.pattern()),
        values: structure,
    })
}

/// Frozen snapshot of the generated masks.
#[derive(Debug, Clone)]
pub struct MaskSet<S> {
    /// `M_f`, `N x F`.
    pub feature: Array2<S>,
    /// `M_s`, aligned to the k-hop edge index.
    pub structure: Vec<S>,
    /// `M_sneg`, aligned to the negative pair list.
    pub negative: Vec<S>,
    pub khop: Arc<SparsePattern>,
}

impl<S: Scalar> MaskSet<S> {
    pub fn new(
        feature: Array2<S>,
        structure: Vec<S>,
        negative: Vec<S>,
        khop: Arc<SparsePattern>,
    ) -> Result<Self> {
        if structure.len() != khop.nnz() {
            return Err(Error::LengthMismatch {
                what: "structure mask",
                expected: khop.nnz(),
                found: structure.len(),
            });
        }
        Ok(Self {
            feature,
            structure,
            negative,
            khop,
        })
    }

    /// `M̂_s` as a sparse matrix.
    pub fn transfer_matrix(&self) -> SparseMatrix<S> {
        SparseMatrix::new(Arc::clone(&self.khop), self.structure.clone())
            .expect("aligned at construction")
    }

    /// `M̂_s` restricted to the entries of `pattern` (which must be a subset
    /// of the k-hop support).
    pub fn restrict_to(&self, pattern: &SparsePattern) -> Result<Vec<S>> {
        pattern
            .entries()
            .map(|(i, j)| {
                self.khop
                    .position(i, j)
                    .map(|p| self.structure[p])
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("entry ({i}, {j}) outside k-hop support"))
                    })
            })
            .collect()
    }
}

/// `E_feat = M_f ⊙ X` and `E_sub = M̂_s ⊙ A^(k)`.
#[derive(Debug, Clone)]
pub struct Explanations<S> {
    pub feature: Array2<S>,
    pub subgraph: SparseMatrix<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeExplanation {
    pub node: usize,
    pub top_features: Vec<(usize, f64)>,
    pub neighbors: Vec<(usize, f64)>,
}

pub fn explanations<S: Scalar>(
    masks: &MaskSet<S>,
    graph: &Graph<S>,
    khop: &KHopAdjacency,
) -> Result<Explanations<S>> {
    let x = graph.features();
    if masks.feature.dim() != x.dim() {
        return Err(Error::shape(
            "explanations",
            format!(
                "feature mask {:?} vs features {:?}",
                masks.feature.dim(),
                x.dim()
            ),
        ));
    }
    if masks.khop.as_ref() != khop.pattern().as_ref() {
        return Err(Error::InvalidArgument(
            "mask set built for a different k-hop pattern".into(),
        ));
    }
    let mut feature = Array2::zeros(x.raw_dim());
    Zip::from(&mut feature)
        .and(&masks.feature)
        .and(x)
        .for_each(|e, &m, &v| *e = m * v);
    // A^(k) is binary, so the Hadamard product keeps M̂_s on its support.
    let subgraph = masks.transfer_matrix();
    Ok(Explanations { feature, subgraph })
}

fn rank_desc<S: Scalar>(mut items: Vec<(usize, S)>) -> Vec<(usize, S)> {
    items.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    items
}

impl<S: Scalar> Explanations<S> {
    /// The `t` feature dimensions with largest `E_feat` weight for node `i`,
    /// ties broken by lower dimension.
    pub fn top_features(&self, i: usize, t: usize) -> Vec<(usize, S)> {
        let mut ranked = rank_desc(self.feature.row(i).iter().copied().enumerate().collect());
        ranked.truncate(t);
        ranked
    }

    /// k-hop neighbours of `i` by descending `E_sub` weight, ties by id.
    pub fn neighbor_ranking(&self, i: usize) -> Vec<(usize, S)> {
        rank_desc(self.subgraph.row(i).collect())
    }

    pub fn node_record(&self, i: usize, top_t: usize) -> NodeExplanation {
        let cast = |v: Vec<(usize, S)>| v.into_iter().map(|(k, w)| (k, w.as_f64())).collect();
        NodeExplanation {
            node: i,
            top_features: cast(self.top_features(i, top_t)),
            neighbors: cast(self.neighbor_ranking(i)),
        }
    }

    /// Undirected edge weight: the larger of the two directed scores.
    pub fn edge_weight(&self, i: usize, j: usize) -> S {
        self.subgraph.get(i, j).max(self.subgraph.get(j, i))
    }

    /// Base-graph edges inside the k-hop subgraph of `center`.
    pub fn subgraph_edges(&self, graph: &Graph<S>, center: usize) -> Vec<(usize, usize, S)> {
        let mut members: Vec<usize> = self.subgraph.pattern().row(center).to_vec();
        members.push(center);
        members.sort_unstable();
        let inside = |v: usize| members.binary_search(&v).is_ok();
        members
            .iter()
            .flat_map(|&u| graph.neighbors(u).iter().map(move |&v| (u, v)))
            .filter(|&(u, v)| u < v && inside(v))
            .map(|(u, v)| (u, v, self.edge_weight(u, v)))
            .collect()
    }

    /// Graphviz rendering of `center`'s k-hop subgraph; darker edges carry
    /// more weight.
    pub fn to_dot(&self, graph: &Graph<S>, center: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "graph node_{center} {{");
        let _ = writeln!(out, "  node [shape=circle];");
        let _ = writeln!(out, "  {center} [style=filled, fillcolor=\"lightblue\"];");
        for &j in self.subgraph.pattern().row(center) {
            let _ = writeln!(out, "  {j};");
        }
        for (u, v, w) in self.subgraph_edges(graph, center) {
            let w = w.as_f64().clamp(0.0, 1.0);
            let gray = ((1.0 - w) * 90.0).round() as u32;
            let _ = writeln!(
                out,
                "  {u} -- {v} [color=\"gray{gray}\", penwidth={:.2}, label=\"{w:.3}\"];",
                1.0 + 2.0 * w
            );
        }
        out.push_str("}\n");
        out
    }
}
