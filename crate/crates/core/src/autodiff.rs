//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes are appended
//! in evaluation order, so walking the tape backwards is a valid topological
//! order and each node is visited once. Sparse matrices enter as a constant
//! [`SparsePattern`] paired with a differentiable `nnz x 1` value column.

use std::cell::{Ref, RefCell};
use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparsePattern;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Encoder,
    MaskGenerator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Parameter<S> {
    pub name: String,
    pub owner: Owner,
    pub value: Array2<S>,
    pub grad: Array2<S>,
}

/// Named trainable tensors, each belonging to one owner group.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S> {
    params: Vec<Parameter<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        owner: Owner,
        value: Array2<S>,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter `{name}`"
            )));
        }
        let grad = Array2::zeros(value.raw_dim());
        self.params.push(Parameter {
            name,
            owner,
            value,
            grad,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Parameter<S> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<S> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn ids_of(&self, owner: Owner) -> Vec<ParamId> {
        self.ids()
            .filter(|&id| self.get(id).owner == owner)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.params.iter()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(S::zero());
        }
    }

    /// Order-sensitive hash of every value bit in the owner group.
    pub fn checksum(&self, owner: Owner) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params.iter().filter(|p| p.owner == owner) {
            for v in &p.value {
                h ^= v.as_f64().to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    SparseMatMul {
        pattern: Arc<SparsePattern>,
        values: Var,
        dense: Var,
    },
    AddBiasRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    AddScalar(Var),
    ConcatColumns(Var, Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    GatherRows(Var, Arc<Vec<usize>>),
    ScatterAddRows(Var, Arc<Vec<usize>>),
    Relu(Var),
    Sigmoid(Var),
    LogSoftmaxRows(Var),
    Powf(Var, S),
    MeanAbsError(Var, Array2<S>),
    SegmentNorm(Var, Arc<Vec<usize>>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<S> {
    value: Array2<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Record of one forward computation.
#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: RefCell<Vec<Node<S>>>,
}

fn dims<S>(a: &Array2<S>) -> String {
    format!("{}x{}", a.nrows(), a.ncols())
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Array2<S>, op: Op<S>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    fn val(&self, v: Var) -> Ref<'_, Array2<S>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Array2<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Free leaf that receives a gradient (used for checks and probes).
    pub fn variable(&self, value: Array2<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter; its gradient can be accumulated back.
    pub fn param(&self, store: &ParamStore<S>, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn value(&self, v: Var) -> Array2<S> {
        self.val(v).clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let a = self.val(v);
        (a.nrows(), a.ncols())
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> S {
        self.val(v)[[0, 0]]
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            if x.ncols() != y.nrows() {
                return Err(Error::shape(
                    "dense_matmul",
                    format!("{} . {}", dims(&x), dims(&y)),
                ));
            }
            x.dot(&*y)
        };
        Ok(self.push(out, Op::MatMul(a, b), self.needs(&[a, b])))
    }

    /// `sparse(pattern, values) . dense` where `values` is an `nnz x 1` column.
    pub fn sparse_matmul(
        &self,
        pattern: &Arc<SparsePattern>,
        values: Var,
        dense: Var,
    ) -> Result<Var> {
        let out = {
            let (w, x) = (self.val(values), self.val(dense));
            if w.nrows() != pattern.nnz() || w.ncols() != 1 {
                return Err(Error::shape(
                    "sparse_dense_matmul",
                    format!("values {} for {} stored entries", dims(&w), pattern.nnz()),
                ));
            }
            if x.nrows() != pattern.n_cols() {
                return Err(Error::shape(
                    "sparse_dense_matmul",
                    format!("{}x{} . {}", pattern.n_rows(), pattern.n_cols(), dims(&x)),
                ));
            }
            let mut out = Array2::zeros((pattern.n_rows(), x.ncols()));
            for (e, (i, j)) in pattern.entries().enumerate() {
                out.row_mut(i).scaled_add(w[[e, 0]], &x.row(j));
            }
            out
        };
        Ok(self.push(
            out,
            Op::SparseMatMul {
                pattern: Arc::clone(pattern),
                values,
                dense,
            },
            self.needs(&[values, dense]),
        ))
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_bias_row(&self, x: Var, bias: Var) -> Result<Var> {
        let out = {
            let (a, b) = (self.val(x), self.val(bias));
            if b.nrows() != 1 || b.ncols() != a.ncols() {
                return Err(Error::shape(
                    "add_bias_row",
                    format!("{} + {}", dims(&a), dims(&b)),
                ));
            }
            &*a + &*b
        };
        Ok(self.push(out, Op::AddBiasRow(x, bias), self.needs(&[x, bias])))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.val(a), self.val(b));
        if x.dim() != y.dim() {
            return Err(Error::shape(op, format!("{} vs {}", dims(&x), dims(&y))));
        }
        Ok(())
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = &*self.val(a) + &*self.val(b);
        Ok(self.push(out, Op::Add(a, b), self.needs(&[a, b])))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = &*self.val(a) - &*self.val(b);
        Ok(self.push(out, Op::Sub(a, b), self.needs(&[a, b])))
    }

    /// Hadamard product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("elementwise_mul", a, b)?;
        let out = &*self.val(a) * &*self.val(b);
        Ok(self.push(out, Op::Mul(a, b), self.needs(&[a, b])))
    }

    pub fn scale(&self, x: Var, c: S) -> Var {
        let out = &*self.val(x) * c;
        self.push(out, Op::Scale(x, c), self.needs(&[x]))
    }

    pub fn add_scalar(&self, x: Var, c: S) -> Var {
        let out = &*self.val(x) + c;
        self.push(out, Op::AddScalar(x), self.needs(&[x]))
    }

    pub fn concat_columns(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            if x.nrows() != y.nrows() {
                return Err(Error::shape(
                    "concat_columns",
                    format!("{} | {}", dims(&x), dims(&y)),
                ));
            }
            ndarray::concatenate(Axis(1), &[x.view(), y.view()]).expect("row counts match")
        };
        Ok(self.push(out, Op::ConcatColumns(a, b), self.needs(&[a, b])))
    }

    pub fn concat_rows(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            if x.ncols() != y.ncols() {
                return Err(Error::shape(
                    "concat_rows",
                    format!("{} / {}", dims(&x), dims(&y)),
                ));
            }
            ndarray::concatenate(Axis(0), &[x.view(), y.view()]).expect("column counts match")
        };
        Ok(self.push(out, Op::ConcatRows(a, b), self.needs(&[a, b])))
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&self, x: Var, start: usize, end: usize) -> Result<Var> {
        let out = {
            let a = self.val(x);
            if start > end || end > a.nrows() {
                return Err(Error::shape(
                    "slice_rows",
                    format!("{start}..{end} of {}", dims(&a)),
                ));
            }
            a.slice(s![start..end, ..]).to_owned()
        };
        Ok(self.push(out, Op::SliceRows(x, start), self.needs(&[x])))
    }

    /// Output row `r` is row `index[r]` of `x`.
    pub fn gather_rows(&self, x: Var, index: &[usize]) -> Result<Var> {
        let out = {
            let a = self.val(x);
            if let Some(&bad) = index.iter().find(|&&i| i >= a.nrows()) {
                return Err(Error::shape(
                    "gather_rows",
                    format!("row {bad} of {}", dims(&a)),
                ));
            }
            a.select(Axis(0), index)
        };
        Ok(self.push(
            out,
            Op::GatherRows(x, Arc::new(index.to_vec())),
            self.needs(&[x]),
        ))
    }

    /// Output row `index[r]` accumulates row `r` of `x`; `n_out` rows total.
    pub fn scatter_add_rows(&self, x: Var, index: &[usize], n_out: usize) -> Result<Var> {
        let out = {
            let a = self.val(x);
            if index.len() != a.nrows() {
                return Err(Error::shape(
                    "scatter_add_rows",
                    format!("{} indices for {}", index.len(), dims(&a)),
                ));
            }
            if let Some(&bad) = index.iter().find(|&&i| i >= n_out) {
                return Err(Error::shape(
                    "scatter_add_rows",
                    format!("target {bad} >= {n_out}"),
                ));
            }
            let mut out = Array2::zeros((n_out, a.ncols()));
            for (r, &t) in index.iter().enumerate() {
                out.row_mut(t).scaled_add(S::one(), &a.row(r));
            }
            out
        };
        Ok(self.push(
            out,
            Op::ScatterAddRows(x, Arc::new(index.to_vec())),
            self.needs(&[x]),
        ))
    }

    pub fn relu(&self, x: Var) -> Var {
        let out = self
            .val(x)
            .mapv(|v| if v > S::zero() { v } else { S::zero() });
        self.push(out, Op::Relu(x), self.needs(&[x]))
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        let out = self.val(x).mapv(sigmoid);
        self.push(out, Op::Sigmoid(x), self.needs(&[x]))
    }

    pub fn log_softmax_rows(&self, x: Var) -> Var {
        let mut out = self.value(x);
        for mut row in out.rows_mut() {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        self.push(out, Op::LogSoftmaxRows(x), self.needs(&[x]))
    }

    /// Elementwise power; inputs must stay in the domain of `powf`.
    pub fn powf(&self, x: Var, p: S) -> Var {
        let out = self.val(x).mapv(|v| v.powf(p));
        self.push(out, Op::Powf(x, p), self.needs(&[x]))
    }

    /// `mean(|pred - target|)` as a 1x1 node.
    pub fn mean_abs_error(&self, pred: Var, target: Array2<S>) -> Result<Var> {
        let out = {
            let a = self.val(pred);
            if a.dim() != target.dim() {
                return Err(Error::shape(
                    "mean_abs_error",
                    format!("{} vs {}", dims(&a), dims(&target)),
                ));
            }
            if a.is_empty() {
                return Err(Error::shape("mean_abs_error", "empty input"));
            }
            let total: S = Zip::from(&*a)
                .and(&target)
                .fold(S::zero(), |acc, &p, &t| acc + (p - t).abs());
            Array2::from_elem((1, 1), total / S::of_usize(a.len()))
        };
        Ok(self.push(out, Op::MeanAbsError(pred, target), self.needs(&[pred])))
    }

    /// Euclidean norm over all entries of the rows assigned to each segment:
    /// output row `s` is `sqrt(sum over rows r with segment[r] = s of |x_r|^2)`.
    /// The gradient at a zero norm is taken as zero.
    pub fn segment_norm(&self, x: Var, segment: &[usize], n_segments: usize) -> Result<Var> {
        let out = {
            let a = self.val(x);
            if segment.len() != a.nrows() {
                return Err(Error::shape(
                    "segment_norm",
                    format!("{} segment ids for {}", segment.len(), dims(&a)),
                ));
            }
            if let Some(&bad) = segment.iter().find(|&&s| s >= n_segments) {
                return Err(Error::shape(
                    "segment_norm",
                    format!("segment {bad} >= {n_segments}"),
                ));
            }
            let mut sq = Array2::zeros((n_segments, 1));
            for (r, &s) in segment.iter().enumerate() {
                sq[[s, 0]] += a.row(r).iter().map(|&v| v * v).sum::<S>();
            }
            sq.mapv_inplace(S::sqrt);
            sq
        };
        Ok(self.push(
            out,
            Op::SegmentNorm(x, Arc::new(segment.to_vec())),
            self.needs(&[x]),
        ))
    }

    /// Norm of each row, as a column.
    pub fn euclidean_row_norm(&self, x: Var) -> Var {
        let rows = self.shape(x).0;
        let ids: Vec<usize> = (0..rows).collect();
        self.segment_norm(x, &ids, rows).expect("identity segments")
    }

    pub fn sum(&self, x: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.val(x).sum());
        self.push(out, Op::Sum(x), self.needs(&[x]))
    }

    /// Mean of all entries; zero for an empty input.
    pub fn mean(&self, x: Var) -> Var {
        let out = {
            let a = self.val(x);
            let m = if a.is_empty() {
                S::zero()
            } else {
                a.sum() / S::of_usize(a.len())
            };
            Array2::from_elem((1, 1), m)
        };
        self.push(out, Op::Mean(x), self.needs(&[x]))
    }

    /// Propagates `d root / d node` to every node that requires a gradient.
    pub fn backward(&self, root: Var) -> Result<Gradients<S>> {
        let nodes = self.nodes.borrow();
        let (r, c) = nodes[root.0].value.dim();
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarRoot(r, c));
        }
        let mut grads: Vec<Option<Array2<S>>> = vec![None; nodes.len()];
        grads[root.0] = Some(Array2::ones((1, 1)));

        let acc = |grads: &mut Vec<Option<Array2<S>>>, v: Var, g: Array2<S>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        };

        for idx in (0..=root.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match &grads[idx] {
                Some(g) => g.clone(),
                None => continue,
            };
            let value = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&value(*b).t()));
                    acc(&mut grads, *b, value(*a).t().dot(&g));
                }
                Op::SparseMatMul {
                    pattern,
                    values,
                    dense,
                } => {
                    let (w, x) = (value(*values), value(*dense));
                    if nodes[values.0].requires_grad {
                        let mut dw = Array2::zeros((pattern.nnz(), 1));
                        for (e, (i, j)) in pattern.entries().enumerate() {
                            dw[[e, 0]] = g.row(i).dot(&x.row(j));
                        }
                        acc(&mut grads, *values, dw);
                    }
                    if nodes[dense.0].requires_grad {
                        let mut dx = Array2::zeros(x.raw_dim());
                        for (e, (i, j)) in pattern.entries().enumerate() {
                            dx.row_mut(j).scaled_add(w[[e, 0]], &g.row(i));
                        }
                        acc(&mut grads, *dense, dx);
                    }
                }
                Op::AddBiasRow(x, b) => {
                    acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &g * value(*b));
                    acc(&mut grads, *b, &g * value(*a));
                }
                Op::Scale(x, c) => acc(&mut grads, *x, g * *c),
                Op::AddScalar(x) => acc(&mut grads, *x, g),
                Op::ConcatColumns(a, b) => {
                    let split = value(*a).ncols();
                    acc(&mut grads, *a, g.slice(s![.., ..split]).to_owned());
                    acc(&mut grads, *b, g.slice(s![.., split..]).to_owned());
                }
                Op::ConcatRows(a, b) => {
                    let split = value(*a).nrows();
                    acc(&mut grads, *a, g.slice(s![..split, ..]).to_owned());
                    acc(&mut grads, *b, g.slice(s![split.., ..]).to_owned());
                }
                Op::SliceRows(x, start) => {
                    let mut dx = Array2::zeros(value(*x).raw_dim());
                    dx.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut grads, *x, dx);
                }
                Op::GatherRows(x, index) => {
                    let mut dx = Array2::zeros(value(*x).raw_dim());
                    for (r, &src) in index.iter().enumerate() {
                        dx.row_mut(src).scaled_add(S::one(), &g.row(r));
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ScatterAddRows(x, index) => {
                    acc(&mut grads, *x, g.select(Axis(0), index));
                }
                Op::Relu(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx).and(value(*x)).for_each(|d, &v| {
                        if v <= S::zero() {
                            *d = S::zero();
                        }
                    });
                    acc(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= y * (S::one() - y));
                    acc(&mut grads, *x, dx);
                }
                Op::LogSoftmaxRows(x) => {
                    let mut dx = g;
                    for (mut drow, yrow) in dx.rows_mut().into_iter().zip(node.value.rows()) {
                        let total = drow.sum();
                        Zip::from(&mut drow)
                            .and(&yrow)
                            .for_each(|d, &y| *d -= y.exp() * total);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Powf(x, p) => {
                    let mut dx = g;
                    Zip::from(&mut dx)
                        .and(value(*x))
                        .for_each(|d, &v| *d *= *p * v.powf(*p - S::one()));
                    acc(&mut grads, *x, dx);
                }
                Op::MeanAbsError(pred, target) => {
                    let p = value(*pred);
                    let scale = g[[0, 0]] / S::of_usize(p.len());
                    let mut dx = Array2::zeros(p.raw_dim());
                    Zip::from(&mut dx).and(p).and(target).for_each(|d, &a, &t| {
                        *d = if a > t {
                            scale
                        } else if a < t {
                            -scale
                        } else {
                            S::zero()
                        };
                    });
                    acc(&mut grads, *pred, dx);
                }
                Op::SegmentNorm(x, segment) => {
                    let a = value(*x);
                    let mut dx = Array2::zeros(a.raw_dim());
                    for (r, &sgm) in segment.iter().enumerate() {
                        let norm = node.value[[sgm, 0]];
                        if norm > S::zero() {
                            dx.row_mut(r).scaled_add(g[[sgm, 0]] / norm, &a.row(r));
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Sum(x) => {
                    acc(
                        &mut grads,
                        *x,
                        Array2::from_elem(value(*x).raw_dim(), g[[0, 0]]),
                    );
                }
                Op::Mean(x) => {
                    let shape = value(*x).raw_dim();
                    let n = shape[0] * shape[1];
                    if n > 0 {
                        acc(
                            &mut grads,
                            *x,
                            Array2::from_elem(shape, g[[0, 0]] / S::of_usize(n)),
                        );
                    }
                }
            }
        }

        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((Var(i), id)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }
}

fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Array2<S>>>,
    params: Vec<(Var, ParamId)>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the root with respect to `v`, if any path reached it.
    pub fn wrt(&self, v: Var) -> Option<&Array2<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds parameter-leaf gradients into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore<S>) {
        for &(var, id) in &self.params {
            if let Some(g) = self.wrt(var) {
                store.get_mut(id).grad += g;
            }
        }
    }
}
