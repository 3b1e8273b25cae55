//! Training losses and their weighted combinations.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{encode, normalize, EncoderVars, SelfLoops};
use crate::error::{Error, Result};
use crate::pairs::PairSets;
use crate::scalar::Scalar;

/// Mean over `nodes` of `-log softmax(logits)[i, labels[i]]`.
pub fn cross_entropy<S: Scalar>(
    tape: &Tape<S>,
    logits: Var,
    labels: &[usize],
    nodes: &[usize],
) -> Result<Var> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(
            "cross entropy over an empty node set".into(),
        ));
    }
    let (n, c) = tape.shape(logits);
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }
    let weight = -S::one() / S::of_usize(nodes.len());
    let mut pick = Array2::zeros((n, c));
    for &i in nodes {
        if i >= n || labels[i] >= c {
            return Err(Error::InvalidArgument(format!(
                "node {i} or its label out of range"
            )));
        }
        pick[[i, labels[i]]] += weight;
    }
    let log_probs = tape.log_softmax_rows(logits);
    Ok(tape.sum(tape.mul(log_probs, tape.constant(pick))?))
}

/// Mean absolute error of `[M_s; M_sneg]` against `[1...; 0...]`.
pub fn subgraph_loss<S: Scalar>(tape: &Tape<S>, positive: Var, negative: Var) -> Result<Var> {
    let (p, n) = (tape.shape(positive).0, tape.shape(negative).0);
    if p + n == 0 {
        return Err(Error::InvalidArgument("subgraph loss with no pairs".into()));
    }
    let stacked = tape.concat_rows(positive, negative)?;
    let mut target = Array2::zeros((p + n, 1));
    target.slice_mut(ndarray::s![..p, ..]).fill(S::one());
    tape.mean_abs_error(stacked, target)
}

/// Cross entropy of the encoder run on mask-weighted inputs:
/// `GE(M_f ⊙ X, M̂_s ⊙ A^(k))`. `structure` holds `M̂_s` on the k-hop pattern
/// (the k-hop adjacency is binary, so the product keeps the mask values).
pub fn masked_cross_entropy<S: Scalar>(
    tape: &Tape<S>,
    khop_loops: &SelfLoops,
    structure: Var,
    masked_features: Var,
    encoder: &EncoderVars,
    labels: &[usize],
    nodes: &[usize],
) -> Result<Var> {
    let adj = normalize(tape, khop_loops, structure)?;
    let out = encode(tape, &adj, masked_features, encoder)?;
    cross_entropy(tape, out.logits, labels, nodes)
}

fn check_weight(name: &str, w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be in [0, 1], got {w}"
        )))
    }
}

/// `alpha (L_sub + L^m_xent) + (1 - alpha) L_xent`; a missing `m_xent` drops
/// that term.
pub fn explainable_objective<S: Scalar>(
    tape: &Tape<S>,
    alpha: f64,
    xent: Var,
    sub: Var,
    m_xent: Option<Var>,
) -> Result<Var> {
    check_weight("alpha", alpha)?;
    let mask_terms = match m_xent {
        Some(m) => tape.add(sub, m)?,
        None => sub,
    };
    tape.add(
        tape.scale(mask_terms, S::of(alpha)),
        tape.scale(xent, S::of(1.0 - alpha)),
    )
}

/// `beta L_triplet + (1 - beta) L_xent`.
pub fn epl_objective<S: Scalar>(tape: &Tape<S>, beta: f64, triplet: Var, xent: Var) -> Result<Var> {
    check_weight("beta", beta)?;
    tape.add(
        tape.scale(triplet, S::of(beta)),
        tape.scale(xent, S::of(1.0 - beta)),
    )
}

/// Row indices of the stacked anchor, positive and negative samples. Rows
/// of one anchor share a segment id; nodes without pairs get no rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletIndex {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub segment: Vec<usize>,
    pub num_anchors: usize,
}

pub fn triplet_features(pairs: &PairSets) -> Result<TripletIndex> {
    let mut idx = TripletIndex {
        anchors: Vec::new(),
        positives: Vec::new(),
        negatives: Vec::new(),
        segment: Vec::new(),
        num_anchors: 0,
    };
    for i in 0..pairs.num_nodes() {
        let (p, n) = (pairs.positives(i), pairs.negatives(i));
        if p.len() != n.len() {
            return Err(Error::InvalidArgument(format!(
                "node {i}: {} positives but {} negatives",
                p.len(),
                n.len()
            )));
        }
        if p.is_empty() {
            continue;
        }
        idx.anchors.extend(std::iter::repeat_n(i, p.len()));
        idx.positives.extend_from_slice(p);
        idx.negatives.extend_from_slice(n);
        idx.segment
            .extend(std::iter::repeat_n(idx.num_anchors, p.len()));
        idx.num_anchors += 1;
    }
    Ok(idx)
}

/// Gathered stacks `(a, p, n)` of `embeddings` for an index.
pub fn gather_triplets<S: Scalar>(
    tape: &Tape<S>,
    embeddings: Var,
    index: &TripletIndex,
) -> Result<(Var, Var, Var)> {
    Ok((
        tape.gather_rows(embeddings, &index.anchors)?,
        tape.gather_rows(embeddings, &index.positives)?,
        tape.gather_rows(embeddings, &index.negatives)?,
    ))
}

/// Mean over anchors of `max(|a_i - p_i| - |a_i - n_i| + margin, 0)`, each
/// norm taken over all of anchor `i`'s stacked rows. Zero with no anchors.
pub fn triplet_loss<S: Scalar>(
    tape: &Tape<S>,
    stacks: (Var, Var, Var),
    segment: &[usize],
    num_anchors: usize,
    margin: f64,
) -> Result<Var> {
    if margin < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "margin must be nonnegative, got {margin}"
        )));
    }
    let (a, p, n) = stacks;
    let to_pos = tape.segment_norm(tape.sub(a, p)?, segment, num_anchors)?;
    let to_neg = tape.segment_norm(tape.sub(a, n)?, segment, num_anchors)?;
    let hinge = tape.relu(tape.add_scalar(tape.sub(to_pos, to_neg)?, S::of(margin)));
    Ok(tape.mean(hinge))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explainable,
    Epl,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explainable => "explainable",
            Phase::Epl => "epl",
        }
    }
}

/// Loss components of one epoch. Terms a phase does not use are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub epoch: usize,
    pub phase: Phase,
    pub xent: f64,
    pub sub: f64,
    pub m_xent: f64,
    pub triplet: f64,
    pub total: f64,
    pub val_accuracy: f64,
}

impl LossBreakdown {
    pub fn components(&self) -> [(&'static str, f64); 5] {
        [
            ("xent", self.xent),
            ("sub", self.sub),
            ("m_xent", self.m_xent),
            ("triplet", self.triplet),
            ("total", self.total),
        ]
    }
}

pub const LOSS_CSV_HEADER: &str = "epoch,phase,xent,sub,m_xent,triplet,total,val_accuracy";

pub fn write_loss_csv<W: Write>(mut out: W, log: &[LossBreakdown]) -> std::io::Result<()> {
    writeln!(out, "{LOSS_CSV_HEADER}")?;
    for r in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            r.phase.as_str(),
            r.xent,
            r.sub,
            r.m_xent,
            r.triplet,
            r.total,
            r.val_accuracy
        )?;
    }
    Ok(())
}
