use faer::prelude::SpSolver;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;
use std::panic::AssertUnwindSafe;

use super::CscMatrix;
use crate::error::{Error, Result};

/// Supernodal sparse LU with partial pivoting.
///
/// The symbolic analysis (fill-reducing ordering and elimination structure)
/// is cached and reused while successive matrices share a pattern, as the
/// Newton matrices of one network do. Only the numeric factorization is
/// repeated.
#[derive(Default)]
pub struct SparseLu {
    symbolic: Option<(CscMatrix, SymbolicLu<usize>)>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu")
            .field("analyzed", &self.symbolic.is_some())
            .finish()
    }
}

fn view(a: &CscMatrix) -> SparseColMatRef<'_, usize, f64> {
    let sym =
        SymbolicSparseColMatRef::new_checked(a.n_rows, a.n_cols, &a.col_ptr, None, &a.row_idx);
    SparseColMatRef::new(sym, a.values.as_slice())
}

fn lu_error(e: LuError) -> Error {
    match e {
        LuError::SymbolicSingular(column) => Error::SingularMatrix { column },
        LuError::Generic(e) => Error::Io(std::io::Error::new(
            std::io::ErrorKind::OutOfMemory,
            format!("sparse LU: {e:?}"),
        )),
    }
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&mut self, a: &CscMatrix) -> Result<LuFactors> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                a.n_rows(),
                a.n_cols()
            )));
        }
        let reuse = matches!(&self.symbolic, Some((p, _)) if p.same_pattern(a));
        if !reuse {
            let sym = SymbolicLu::try_new(view(a).symbolic())
                .map_err(|e| lu_error(LuError::Generic(e)))?;
            self.symbolic = Some((a.clone(), sym));
        }
        let sym = self
            .symbolic
            .as_ref()
            .map(|(_, s)| s.clone())
            .expect("analyzed above");
        // the simplicial kernel panics on an exactly zero pivot instead of
        // returning an error; the supernodal one yields non-finite factors
        let numeric =
            std::panic::catch_unwind(AssertUnwindSafe(|| Lu::try_new_with_symbolic(sym, view(a))));
        let lu = numeric
            .map_err(|_| Error::SingularMatrix { column: 0 })?
            .map_err(lu_error)?;
        Ok(LuFactors { a: a.clone(), lu })
    }
}

/// Numeric factors of one matrix. Solves apply one step of iterative
/// refinement against the original matrix.
pub struct LuFactors {
    a: CscMatrix,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for LuFactors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactors")
            .field("dim", &self.dim())
            .finish()
    }
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.a.n_cols()
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x.read(i, 0)).collect()
    }

    /// Fails with [`Error::SingularMatrix`] when a pivot vanished and the
    /// solution is not finite.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs has length {}, expected {}",
                b.len(),
                self.dim()
            )));
        }
        let mut x = self.raw_solve(b);
        if let Some(column) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix { column });
        }
        let ax = self.a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let dx = self.raw_solve(&r);
        if dx.iter().all(|v| v.is_finite()) {
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        Ok(x)
    }
}
