use log::debug;

use super::kkt::damping_scale;
use super::{PowerFlowResult, SolveStatus, SolverOptions};
use crate::ecf::{EcfModel, StateVector};
use crate::error::{Error, Result};
use crate::linsolve::{norm_inf, SparseLu};
use crate::netmodel::Network;

const MAX_HALVINGS: usize = 10;

/// Damped Newton-Raphson on `g(x) = 0`.
///
/// Never errors on non-convergence: a singular Jacobian, voltage collapse
/// that step halving cannot avoid, or `max_iter` all give
/// [`SolveStatus::Diverged`] with the last iterate.
pub fn solve_powerflow(
    net: &Network,
    x0: &StateVector,
    opts: &SolverOptions,
) -> Result<PowerFlowResult> {
    let model = EcfModel::new(net)?;
    solve_powerflow_with_model(&model, x0, opts)
}

pub fn solve_powerflow_with_model(
    model: &EcfModel,
    x0: &StateVector,
    opts: &SolverOptions,
) -> Result<PowerFlowResult> {
    opts.validate()?;
    if x0.as_slice().len() != model.n_eq() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, model expects {}",
            x0.as_slice().len(),
            model.n_eq()
        )));
    }
    let mut x = x0.clone();
    let diverged = |x: StateVector, iterations, residual_norm| PowerFlowResult {
        status: SolveStatus::Diverged,
        x,
        iterations,
        residual_norm,
    };
    let mut g = match model.residual(x.as_slice()) {
        Ok(g) => g,
        Err(Error::VoltageCollapse { .. }) => return Ok(diverged(x, 0, f64::INFINITY)),
        Err(e) => return Err(e),
    };
    let mut lu = SparseLu::new();
    for it in 0..=opts.max_iter {
        let norm = norm_inf(&g);
        debug!("pf iter {it}: |g| = {norm:.3e}");
        if norm <= opts.tol {
            return Ok(PowerFlowResult {
                status: SolveStatus::Converged,
                x,
                iterations: it,
                residual_norm: norm,
            });
        }
        if it == opts.max_iter || !norm.is_finite() {
            return Ok(diverged(x, it, norm));
        }
        let jac = model.jacobian(x.as_slice())?;
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let dx = match lu.factor(&jac).and_then(|f| f.solve(&rhs)) {
            Ok(dx) => dx,
            Err(Error::SingularMatrix { .. }) => return Ok(diverged(x, it, norm)),
            Err(e) => return Err(e),
        };
        let mut s = damping_scale(&dx, model.n_bus(), opts.damping);
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = x.clone();
            for (xi, di) in trial.as_mut_slice().iter_mut().zip(&dx) {
                *xi += s * di;
            }
            match model.residual(trial.as_slice()) {
                Ok(gt) => {
                    accepted = Some((trial, gt));
                    break;
                }
                Err(Error::VoltageCollapse { .. }) => s *= 0.5,
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some((xt, gt)) => {
                x = xt;
                g = gt;
            }
            None => return Ok(diverged(x, it, norm)),
        }
    }
    unreachable!("loop returns on its final iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecf::InitMode;
    use crate::netmodel::tests::two_bus;

    #[test]
    fn light_load_converges() {
        let net = two_bus(0.5, 0.2);
        let model = EcfModel::new(&net).unwrap();
        let x0 = model.init_state(InitMode::Flat);
        let r = solve_powerflow_with_model(&model, &x0, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.residual_norm <= 1e-8);
        assert!(r.iterations < 10);
    }

    #[test]
    fn heavy_load_diverges() {
        // Maximum transfer over x = 0.1 at unity voltage is far below 20 pu.
        let net = two_bus(20.0, 5.0);
        let r = solve_powerflow(
            &net,
            &crate::ecf::init_state(&net, InitMode::Flat).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.status, SolveStatus::Diverged);
    }
}
