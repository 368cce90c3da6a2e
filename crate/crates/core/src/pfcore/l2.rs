use log::{debug, info};

use super::kkt::{damping_scale, KktNewton};
use super::{per_bus_magnitudes, InfeasibilitySolution, SolveStatus, SolverOptions};
use crate::ecf::{EcfModel, InitMode, StateVector};
use crate::error::{Error, Result};
use crate::linsolve::{norm_inf, CscMatrix};
use crate::netmodel::Network;

/// Merit weight of the rows that admit no injection.
const EQUALITY_WEIGHT: f64 = 1e4;
const RHO_UP: f64 = 10.0;
const RHO_DOWN: f64 = 0.1;
/// Relative shifts below this are dropped.
const RHO_FLOOR: f64 = 1e-12;
const RHO_CEIL: f64 = 1e12;
/// An accepted step lowering the merit by less than this fraction counts as
/// stalled and triggers a bounded run of undamped Newton steps.
const STALL: f64 = 0.02;
const KKT_ACCEPT: f64 = 0.5;
const WATCHDOG_BUDGET: usize = 30;
const WATCHDOG_TRIES: usize = 3;
const MAX_HALVINGS: usize = 10;

/// Minimum-norm infeasibility currents: `min ½‖I_f‖²  s.t.  g(x) + S I_f = 0`.
///
/// Starts flat; on divergence retries once from the case voltages.
pub fn solve_l2(net: &Network, opts: &SolverOptions) -> Result<InfeasibilitySolution> {
    let model = EcfModel::new(net)?;
    solve_l2_with_model(&model, opts)
}

pub fn solve_l2_with_model(
    model: &EcfModel,
    opts: &SolverOptions,
) -> Result<InfeasibilitySolution> {
    opts.validate()?;
    let first = solve_l2_from(model, &model.init_state(InitMode::Flat), None, opts);
    match first {
        Ok(sol) if sol.is_converged() => Ok(sol),
        other => {
            info!("least-squares solve from flat start failed, retrying from case voltages");
            let retry = solve_l2_from(model, &model.init_state(InitMode::FromCase), None, opts);
            match (other, retry) {
                (_, Ok(sol)) if sol.is_converged() => Ok(sol),
                (Ok(a), _) => Ok(a),
                (Err(_), r) => r,
            }
        }
    }
}

#[derive(Clone)]
struct Trial {
    x: StateVector,
    g: Vec<f64>,
    jac: CscMatrix,
    merit: f64,
    kkt: f64,
}

/// Least-squares solve from an explicit primal (and optionally dual) start.
///
/// Each step solves the KKT system for `(dx, λ⁺)` with a proximal shift
/// `ρ · diag(JᵀJ)` on the state block, Levenberg-Marquardt style: `ρ`
/// shrinks after a step that lowers `½‖g_S‖² + ½w‖g_E‖²` (injection rows
/// `S`, the rest `E`) or halves the KKT residual, and grows otherwise. With
/// `ρ = 0` the step is the exact Newton step.
///
/// When progress stalls, up to 30 unshifted Newton steps run from a
/// checkpoint regardless of the merit (a watchdog). The run is kept if it
/// ends below the checkpoint's merit or KKT residual and undone otherwise.
/// Voltage steps are capped at `opts.damping`.
pub fn solve_l2_from(
    model: &EcfModel,
    x0: &StateVector,
    lambda0: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<InfeasibilitySolution> {
    opts.validate()?;
    let m = model.n_eq();
    let sys = model.system();
    let inj = model.injection_set();
    if x0.as_slice().len() != m {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, model expects {m}",
            x0.as_slice().len()
        )));
    }
    let mut lambda = match lambda0 {
        Some(l) if l.len() == m => l.to_vec(),
        Some(l) => {
            return Err(Error::DimensionMismatch(format!(
                "multiplier start has {} entries, expected {m}",
                l.len()
            )))
        }
        None => vec![0.0; m],
    };
    let injected = {
        let mut mask = vec![false; m];
        for j in 0..inj.dim() {
            mask[inj.row_of(sys, j)] = true;
        }
        mask
    };
    let evaluate = |x: StateVector, lambda: &[f64]| -> Result<Trial> {
        let g = model.residual(x.as_slice())?;
        let jac = model.jacobian(x.as_slice())?;
        let merit = g
            .iter()
            .zip(&injected)
            .map(|(v, &s)| {
                if s {
                    0.5 * v * v
                } else {
                    0.5 * EQUALITY_WEIGHT * v * v
                }
            })
            .sum();
        let kkt = kkt_norm(&jac, &g, lambda, &injected);
        Ok(Trial {
            x,
            g,
            jac,
            merit,
            kkt,
        })
    };

    let mut cur = evaluate(x0.clone(), &lambda)?;
    let mut rho = 0.0;
    let w = vec![1.0; inj.dim()];
    let zeros = vec![0.0; m];
    let mut newton = KktNewton::new();
    let mut status = SolveStatus::Diverged;
    let mut iterations = 0;
    // (checkpoint, multipliers, rho, iterations left) while running undamped
    let mut watchdog: Option<(Trial, Vec<f64>, f64, usize)> = None;
    let mut watchdog_tries = 0;
    while iterations <= opts.max_iter {
        debug!(
            "l2 iter {iterations}: kkt = {:.3e}, merit = {:.3e}, rho = {rho:.1e}{}",
            cur.kkt,
            cur.merit,
            if watchdog.is_some() { " (newton)" } else { "" }
        );
        if cur.kkt <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if let Some((_, _, _, 0)) = watchdog {
            let (ckpt, ckpt_lambda, ckpt_rho, _) = watchdog.take().expect("checked above");
            if cur.kkt.is_finite() && (cur.merit < ckpt.merit || cur.kkt < KKT_ACCEPT * ckpt.kkt) {
                rho = ckpt_rho * RHO_DOWN;
            } else {
                debug!("l2 undamped run failed, back to kkt {:.3e}", ckpt.kkt);
                cur = ckpt;
                lambda = ckpt_lambda;
                rho = ckpt_rho.max(RHO_FLOOR) * RHO_UP;
            }
        }
        if iterations == opts.max_iter || !cur.kkt.is_finite() || rho > RHO_CEIL {
            break;
        }
        iterations += 1;
        let undamped = watchdog.is_some();
        let shift: Vec<f64> = if undamped {
            Vec::new()
        } else {
            column_sq_norms(&cur.jac).iter().map(|v| rho * v).collect()
        };
        let neg_g: Vec<f64> = cur.g.iter().map(|v| -v).collect();
        let (dx, lambda_new) = newton.solve(
            model,
            cur.x.as_slice(),
            &lambda,
            &cur.jac,
            &w,
            &shift,
            &zeros,
            &neg_g,
        )?;
        let mut s = damping_scale(&dx, model.n_bus(), opts.damping);
        let mut trial = None;
        for _ in 0..=MAX_HALVINGS {
            let mut x = cur.x.clone();
            for (xi, di) in x.as_mut_slice().iter_mut().zip(&dx) {
                *xi += s * di;
            }
            let lambda_trial: Vec<f64> = lambda
                .iter()
                .zip(&lambda_new)
                .map(|(a, b)| a + s * (b - a))
                .collect();
            match evaluate(x, &lambda_trial) {
                Ok(t) => {
                    trial = Some((t, lambda_trial));
                    break;
                }
                Err(Error::VoltageCollapse { .. }) if undamped => s *= 0.5,
                Err(Error::VoltageCollapse { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        if let Some((_, _, _, left)) = watchdog.as_mut() {
            *left -= 1;
            match trial {
                Some((t, l)) => {
                    cur = t;
                    lambda = l;
                }
                None => *left = 0,
            }
            continue;
        }
        match trial {
            Some((t, l)) if t.merit < cur.merit || t.kkt < KKT_ACCEPT * cur.kkt => {
                let stalled = t.merit > (1.0 - STALL) * cur.merit;
                cur = t;
                lambda = l;
                rho *= RHO_DOWN;
                if rho < RHO_FLOOR {
                    rho = 0.0;
                }
                if stalled && rho > 0.0 && watchdog_tries < WATCHDOG_TRIES {
                    watchdog_tries += 1;
                    watchdog = Some((cur.clone(), lambda.clone(), rho, WATCHDOG_BUDGET));
                }
            }
            _ => rho = (rho * RHO_UP).max(RHO_FLOOR * RHO_UP),
        }
    }
    let i_f: Vec<f64> = inj.gather(sys, &lambda).iter().map(|v| -v).collect();
    let objective = 0.5 * i_f.iter().map(|v| v * v).sum::<f64>();
    Ok(InfeasibilitySolution {
        status,
        x: cur.x,
        per_bus_mag: per_bus_magnitudes(&i_f),
        i_f,
        lambda,
        t: Vec::new(),
        mu_u: Vec::new(),
        mu_l: Vec::new(),
        injection_buses: inj.buses.clone(),
        objective,
        iterations,
        kkt_residual: cur.kkt,
        epsilon: 0.0,
    })
}

fn column_sq_norms(jac: &CscMatrix) -> Vec<f64> {
    (0..jac.n_cols())
        .map(|c| jac.col(c).map(|(_, v)| v * v).sum())
        .collect()
}

/// `max(‖Jᵀλ‖, ‖g + S I_f‖)` with `I_f = −Sᵀλ`.
fn kkt_norm(jac: &CscMatrix, g: &[f64], lambda: &[f64], injected: &[bool]) -> f64 {
    let r_x = norm_inf(&jac.tr_mul_vec(lambda));
    let r_p = g
        .iter()
        .zip(lambda)
        .zip(injected)
        .map(|((gi, li), &s)| if s { (gi - li).abs() } else { gi.abs() })
        .fold(0.0, f64::max);
    r_x.max(r_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::two_bus;

    #[test]
    fn feasible_case_has_zero_currents() {
        let sol = solve_l2(&two_bus(0.5, 0.2), &SolverOptions::default()).unwrap();
        assert!(sol.is_converged());
        assert!(sol.max_magnitude() < 1e-7, "{:?}", sol.per_bus_mag);
    }

    #[test]
    fn infeasible_case_has_positive_current() {
        let sol = solve_l2(&two_bus(20.0, 5.0), &SolverOptions::default()).unwrap();
        assert!(sol.is_converged());
        assert!(sol.max_magnitude() > 1.0);
        let model = EcfModel::new(&two_bus(20.0, 5.0)).unwrap();
        let g = model.residual(sol.x.as_slice()).unwrap();
        let sys = model.system();
        let mut bal = g.clone();
        for (j, v) in sol.i_f.iter().enumerate() {
            bal[model.injection_set().row_of(sys, j)] += v;
        }
        assert!(norm_inf(&bal) < 1e-8);
    }
}
