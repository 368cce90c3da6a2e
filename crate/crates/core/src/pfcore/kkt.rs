use crate::ecf::EcfModel;
use crate::error::Result;
use crate::linsolve::{CscMatrix, SparseLu, TripletMatrix};

/// Newton systems of the form
///
/// ```text
/// [ H(x, λ) + diag(ρ)  Jᵀ        ] [dx]   [rhs_x]
/// [ J              -S diag(w) Sᵀ ] [dλ] = [rhs_λ]
/// ```
///
/// with `S` the injection selector and `ρ ≥ 0` a per-column proximal shift
/// (empty for none). The sparsity pattern is fixed for a given
/// model, so the symbolic factorization is computed once.
pub(crate) struct KktNewton {
    lu: SparseLu,
}

impl KktNewton {
    pub(crate) fn new() -> Self {
        Self {
            lu: SparseLu::new(),
        }
    }

    pub(crate) fn assemble(
        model: &EcfModel,
        x: &[f64],
        lambda: &[f64],
        jac: &CscMatrix,
        w: &[f64],
        rho: &[f64],
    ) -> Result<CscMatrix> {
        let m = model.n_eq();
        let sys = model.system();
        let inj = model.injection_set();
        let mut t = TripletMatrix::with_capacity(2 * m, 2 * m, 2 * jac.nnz() + 4 * m + inj.dim());
        model.for_each_hessian_entry(x, lambda, |r, c, v| t.push(r, c, v))?;
        for c in 0..m {
            t.push(c, c, rho.get(c).copied().unwrap_or(0.0));
        }
        for c in 0..m {
            for (r, v) in jac.col(c) {
                t.push(m + r, c, v);
                t.push(c, m + r, v);
            }
        }
        for (j, &wj) in w.iter().enumerate() {
            let r = m + inj.row_of(sys, j);
            t.push(r, r, -wj);
        }
        t.to_csc()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn solve(
        &mut self,
        model: &EcfModel,
        x: &[f64],
        lambda: &[f64],
        jac: &CscMatrix,
        w: &[f64],
        rho: &[f64],
        rhs_x: &[f64],
        rhs_l: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = Self::assemble(model, x, lambda, jac, w, rho)?;
        let f = self.lu.factor(&k)?;
        let mut rhs = Vec::with_capacity(rhs_x.len() + rhs_l.len());
        rhs.extend_from_slice(rhs_x);
        rhs.extend_from_slice(rhs_l);
        let mut sol = f.solve(&rhs)?;
        let dl = sol.split_off(rhs_x.len());
        Ok((sol, dl))
    }
}

/// Largest step in `(0, 1]` keeping every voltage component change within
/// `damping`. The leading `2 · n_bus` entries of `dx` are voltages; the
/// generator unknowns are powers and are not limited.
pub(crate) fn damping_scale(dx: &[f64], n_bus: usize, damping: f64) -> f64 {
    let big = crate::linsolve::norm_inf(&dx[..2 * n_bus]);
    if big > damping {
        damping / big
    } else {
        1.0
    }
}
