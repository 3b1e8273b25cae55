//! Compressed sparse row storage for binary patterns and weighted matrices.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparsity structure of an `n_rows x n_cols` matrix, entries sorted by
/// `(row, col)` with no duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from arbitrary `(row, col)` entries; duplicates are merged.
    pub fn from_entries<I>(n_rows: usize, n_cols: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut entries: Vec<(usize, usize)> = entries.into_iter().collect();
        if let Some(&(i, j)) = entries.iter().find(|&&(i, j)| i >= n_rows || j >= n_cols) {
            return Err(Error::EdgeOutOfRange(i, j, n_rows.max(n_cols)));
        }
        entries.sort_unstable();
        entries.dedup();
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(i, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let (rows, cols) = entries.into_iter().unzip();
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            rows,
            cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Row index of every stored entry.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Column index of every stored entry.
    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Column indices stored in row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_range(i)]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Storage position of entry `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n_rows {
            return None;
        }
        let range = self.row_range(i);
        self.cols[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|p| range.start + p)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.position(i, j).is_some()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }

    /// The same pattern with every diagonal entry present. Returns the new
    /// pattern and, for the old entries and then the diagonal `0..n`, their
    /// positions inside it.
    pub fn with_diagonal(&self) -> Result<(SparsePattern, Vec<usize>, Vec<usize>)> {
        if self.n_rows != self.n_cols {
            return Err(Error::shape(
                "with_diagonal",
                format!("pattern is {}x{}", self.n_rows, self.n_cols),
            ));
        }
        let n = self.n_rows;
        let full = SparsePattern::from_entries(n, n, self.entries().chain((0..n).map(|i| (i, i))))?;
        let old = self
            .entries()
            .map(|(i, j)| full.position(i, j).expect("entry kept"))
            .collect();
        let diag = (0..n)
            .map(|i| full.position(i, i).expect("diagonal added"))
            .collect();
        Ok((full, old, diag))
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.entries().all(|(i, j)| self.contains(j, i))
    }
}

/// Values laid over a shared [`SparsePattern`].
#[derive(Debug, Clone)]
pub struct SparseMatrix<S> {
    pattern: Arc<SparsePattern>,
    values: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    pub fn new(pattern: Arc<SparsePattern>, values: Vec<S>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::LengthMismatch {
                what: "sparse values",
                expected: pattern.nnz(),
                found: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    /// Every stored entry set to one.
    pub fn ones(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![S::one(); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.pattern
            .position(i, j)
            .map_or(S::zero(), |p| self.values[p])
    }

    /// Stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let range = self.pattern.row_range(i);
        self.pattern.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<S> {
        let mut out = Array2::zeros((self.pattern.n_rows, self.pattern.n_cols));
        for ((i, j), &v) in self.pattern.entries().zip(&self.values) {
            out[[i, j]] = v;
        }
        out
    }
}
