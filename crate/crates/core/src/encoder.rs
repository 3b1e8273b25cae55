//! Two-layer GCN encoder over an optionally weighted adjacency.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{Owner, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::optim::xavier_uniform;
use crate::scalar::Scalar;
use crate::sparse::{SparseMatrix, SparsePattern};

/// Weights `W1: F x F_hid`, `W2: F_hid x C`, optional row biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderParams {
    pub w1: ParamId,
    pub w2: ParamId,
    pub b1: Option<ParamId>,
    pub b2: Option<ParamId>,
}

impl EncoderParams {
    pub fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        num_features: usize,
        hidden: usize,
        num_classes: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let w1 = store.add(
            "encoder.w1",
            Owner::Encoder,
            xavier_uniform(num_features, hidden, rng),
        )?;
        let w2 = store.add(
            "encoder.w2",
            Owner::Encoder,
            xavier_uniform(hidden, num_classes, rng),
        )?;
        let (b1, b2) = if bias {
            (
                Some(store.add("encoder.b1", Owner::Encoder, Array2::zeros((1, hidden)))?),
                Some(store.add(
                    "encoder.b2",
                    Owner::Encoder,
                    Array2::zeros((1, num_classes)),
                )?),
            )
        } else {
            (None, None)
        };
        Ok(Self { w1, w2, b1, b2 })
    }

    /// Looks the parameters up by their registered names.
    pub fn from_store<S: Scalar>(store: &ParamStore<S>) -> Result<Self> {
        let need = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))
        };
        Ok(Self {
            w1: need("encoder.w1")?,
            w2: need("encoder.w2")?,
            b1: store.find("encoder.b1"),
            b2: store.find("encoder.b2"),
        })
    }

    pub fn bind<S: Scalar>(&self, tape: &Tape<S>, store: &ParamStore<S>) -> EncoderVars {
        EncoderVars {
            w1: tape.param(store, self.w1),
            w2: tape.param(store, self.w2),
            b1: self.b1.map(|id| tape.param(store, id)),
            b2: self.b2.map(|id| tape.param(store, id)),
        }
    }
}

/// Encoder parameters bound to one tape.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub w1: Var,
    pub w2: Var,
    pub b1: Option<Var>,
    pub b2: Option<Var>,
}

/// Precomputed layout of `pattern + I`.
#[derive(Debug, Clone)]
pub struct SelfLoops {
    base: Arc<SparsePattern>,
    full: Arc<SparsePattern>,
    base_pos: Vec<usize>,
    diag_pos: Vec<usize>,
}

impl SelfLoops {
    pub fn new(base: &Arc<SparsePattern>) -> Result<Self> {
        let (full, base_pos, diag_pos) = base.with_diagonal()?;
        Ok(Self {
            base: Arc::clone(base),
            full: Arc::new(full),
            base_pos,
            diag_pos,
        })
    }

    pub fn base(&self) -> &Arc<SparsePattern> {
        &self.base
    }
}

/// `D^-1/2 (W + I) D^-1/2` on a tape, with `D` the weighted row degree plus one.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub pattern: Arc<SparsePattern>,
    pub values: Var,
}

/// Normalises edge weights laid over `loops.base()`; gradients flow back to
/// `weights`. Negative weights are rejected.
pub fn normalize<S: Scalar>(
    tape: &Tape<S>,
    loops: &SelfLoops,
    weights: Var,
) -> Result<NormalizedAdjacency> {
    let n = loops.base.n_rows();
    let (rows, cols) = tape.shape(weights);
    if rows != loops.base.nnz() || cols != 1 {
        return Err(Error::shape(
            "normalize",
            format!("weights {rows}x{cols} for {} entries", loops.base.nnz()),
        ));
    }
    if tape.value(weights).iter().any(|&w| w < S::zero()) {
        return Err(Error::InvalidArgument(
            "adjacency weights must be nonnegative".into(),
        ));
    }
    let degree = tape.add_scalar(
        tape.scatter_add_rows(weights, loops.base.rows(), n)?,
        S::one(),
    );
    let inv_sqrt = tape.powf(degree, S::of(-0.5));
    let left = tape.gather_rows(inv_sqrt, loops.base.rows())?;
    let right = tape.gather_rows(inv_sqrt, loops.base.cols())?;
    let off = tape.mul(tape.mul(weights, left)?, right)?;
    let diag = tape.mul(inv_sqrt, inv_sqrt)?;
    let nnz = loops.full.nnz();
    let values = tape.add(
        tape.scatter_add_rows(off, &loops.base_pos, nnz)?,
        tape.scatter_add_rows(diag, &loops.diag_pos, nnz)?,
    )?;
    Ok(NormalizedAdjacency {
        pattern: Arc::clone(&loops.full),
        values,
    })
}

/// Constant-valued normalisation, outside any training tape.
pub fn normalize_matrix<S: Scalar>(adj: &SparseMatrix<S>) -> Result<SparseMatrix<S>> {
    let tape = Tape::new();
    let loops = SelfLoops::new(adj.pattern())?;
    let w = tape.constant(column(adj.values()));
    let norm = normalize(&tape, &loops, w)?;
    SparseMatrix::new(norm.pattern, tape.value(norm.values).into_iter().collect())
}

pub(crate) fn column<S: Scalar>(values: &[S]) -> Array2<S> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

/// Output of [`encode`]: pre-activation hidden layer `H` and logits `Z`.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub hidden: Var,
    pub logits: Var,
}

/// `H = Â X W1 (+b1)`, `Z = Â relu(H) W2 (+b2)`.
pub fn encode<S: Scalar>(
    tape: &Tape<S>,
    adj: &NormalizedAdjacency,
    x: Var,
    params: &EncoderVars,
) -> Result<Encoded> {
    let mut hidden = tape.sparse_matmul(&adj.pattern, adj.values, tape.matmul(x, params.w1)?)?;
    if let Some(b) = params.b1 {
        hidden = tape.add_bias_row(hidden, b)?;
    }
    let activated = tape.relu(hidden);
    let mut logits =
        tape.sparse_matmul(&adj.pattern, adj.values, tape.matmul(activated, params.w2)?)?;
    if let Some(b) = params.b2 {
        logits = tape.add_bias_row(logits, b)?;
    }
    Ok(Encoded { hidden, logits })
}
