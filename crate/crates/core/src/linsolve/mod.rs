//! Sparse unsymmetric linear algebra for the Newton solvers.
//!
//! Matrices are assembled as triplets and compressed to CSC with duplicates
//! summed. [`SparseLu`] wraps a supernodal LU whose symbolic analysis is
//! cached across factorizations of the same sparsity pattern.

mod lu;

pub use lu::{LuFactors, SparseLu};

use crate::error::{Error, Result};

/// Coordinate-format builder. Duplicate entries are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TripletMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            ..Default::default()
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, nnz: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            rows: Vec::with_capacity(nnz),
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    /// Appends an entry. Explicit zeros are kept so that the compressed
    /// pattern depends only on the call sequence, not on the values.
    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn to_csc(&self) -> Result<CscMatrix> {
        for (&r, &c) in self.rows.iter().zip(&self.cols) {
            if r >= self.n_rows || c >= self.n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {}x{}",
                    self.n_rows, self.n_cols
                )));
            }
        }

        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); self.vals.len()];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            entries[next[c]] = (r, v);
            next[c] += 1;
        }

        let mut col_ptr = Vec::with_capacity(self.n_cols + 1);
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        col_ptr.push(0);
        for c in 0..self.n_cols {
            let col = &mut entries[counts[c]..counts[c + 1]];
            // stable, so duplicates are summed in insertion order
            col.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(r, v) in col.iter() {
                if r == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                    last = r;
                }
            }
            col_ptr.push(row_idx.len());
        }

        Ok(CscMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            col_ptr,
            row_idx,
            values,
        })
    }
}

/// Compressed sparse column matrix with sorted, unique row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut t = TripletMatrix::with_capacity(n_rows, n_cols, entries.len());
        for &(r, c, v) in entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            t.push(r, c, v);
        }
        t.to_csc()
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(row, value)` over the stored entries of column `col`.
    pub fn col(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(p) => self.values[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for (r, v) in self.col(c) {
                y[r] += v * xc;
            }
        }
        y
    }

    /// `Aᵀ x`
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows);
        (0..self.n_cols)
            .map(|c| self.col(c).map(|(r, v)| v * x[r]).sum())
            .collect()
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut t = TripletMatrix::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for c in 0..self.n_cols {
            for (r, v) in self.col(c) {
                t.push(c, r, v);
            }
        }
        t.to_csc().expect("transpose indices are in range")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for c in 0..self.n_cols {
            for (r, v) in self.col(c) {
                d[r][c] = v;
            }
        }
        d
    }

    pub(crate) fn same_pattern(&self, other: &CscMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }
}

/// Factor-and-solve `A x = b` in one call.
pub fn lu_solve(a: &CscMatrix, b: &[f64]) -> Result<Vec<f64>> {
    SparseLu::new().factor(a)?.solve(b)
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
