use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{
    assign_enforcers, solve_sparse, sparsity_count, support, EnforcerVector, SparsityConfig,
};
use crate::ecf::EcfModel;
use crate::error::{Error, Result};
use crate::pfcore::{solve_l2_with_model, InfeasibilitySolution, SolveStatus, SolverOptions};

/// Assigns two-level enforcers around `init` and solves once.
///
/// The result may carry more than `k` nonzero buses.
pub fn localize_k_sparse(
    model: &EcfModel,
    init: &InfeasibilitySolution,
    k: usize,
    cfg: &SparsityConfig,
    opts: &SolverOptions,
) -> Result<(InfeasibilitySolution, EnforcerVector)> {
    if !init.is_converged() {
        return Err(Error::Diverged("warm start has not converged".into()));
    }
    let c = assign_enforcers(&init.per_bus_mag, k, cfg.c_high, cfg.c_low)?;
    let sol = solve_sparse(model, &c, init, cfg, opts)?;
    log_bus_coupling(model, &sol, &c, cfg.tau);
    Ok((sol, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub k_goal: usize,
    pub k_actual: usize,
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeOutcome {
    pub solution: InfeasibilitySolution,
    /// Enforcers of the returned solution.
    pub enforcers: EnforcerVector,
    pub least_squares: InfeasibilitySolution,
    pub trace: Vec<OuterIteration>,
}

/// Outer-loop adjustment point, called after every converged stage with
/// `(c_high, c_low, rate)`. The default hook leaves them unchanged.
pub trait EnforcerHook {
    fn adjust(
        &mut self,
        _last: &OuterIteration,
        _c_high: &mut f64,
        _c_low: &mut f64,
        _rate: &mut f64,
    ) {
    }
}

impl EnforcerHook for () {}

/// Least squares, then repeated k-sparse solves with a shrinking goal.
///
/// `k` starts at `ceil(n_bus · rate)` and becomes
/// `max(1, floor(min(k, k_actual) · rate))`. The loop ends when `k_actual`
/// repeats, after the `k = 1` stage, or at `max_outer`. A failed stage
/// returns the previous stage tagged [`SolveStatus::Partial`].
pub fn localize(
    model: &EcfModel,
    cfg: &SparsityConfig,
    opts: &SolverOptions,
) -> Result<LocalizeOutcome> {
    localize_with_hook(model, cfg, opts, &mut ())
}

pub fn localize_with_hook(
    model: &EcfModel,
    cfg: &SparsityConfig,
    opts: &SolverOptions,
    hook: &mut dyn EnforcerHook,
) -> Result<LocalizeOutcome> {
    cfg.validate()?;
    let l2 = solve_l2_with_model(model, opts)?;
    if !l2.is_converged() {
        return Err(Error::Diverged(format!(
            "least-squares warm start stopped after {} iterations at residual {:.3e}",
            l2.iterations, l2.kkt_residual
        )));
    }
    let mut cfg = *cfg;
    let mut k = ((model.n_bus() as f64) * cfg.rate).ceil().max(1.0) as usize;
    let n_inj = model.injection_set().len();
    let mut prev = l2.clone();
    let mut prev_c = EnforcerVector::uniform(n_inj, 0.0)?;
    let mut prev_actual: Option<usize> = None;
    let mut trace = Vec::new();
    for outer in 0..cfg.max_outer {
        let warm = prev.clone();
        let (sol, c) = localize_k_sparse(model, &warm, k, &cfg, opts)?;
        let k_actual = sparsity_count(&sol, cfg.tau);
        let step = OuterIteration {
            k_goal: k,
            k_actual,
            objective: sol.objective,
            iterations: sol.iterations,
            status: sol.status,
        };
        info!(
            "outer {outer}: k_goal {k}, k_actual {k_actual}, {:?}",
            sol.status
        );
        if k_actual <= 10 {
            let ids: Vec<_> = support(&sol, cfg.tau)
                .iter()
                .map(|&j| model.bus_ids()[sol.injection_buses[j]])
                .collect();
            info!("outer {outer}: support {ids:?}");
        }
        trace.push(step.clone());
        if !sol.is_converged() {
            prev.status = SolveStatus::Partial;
            return Ok(LocalizeOutcome {
                solution: prev,
                enforcers: prev_c,
                least_squares: l2,
                trace,
            });
        }
        if let Some(p) = prev_actual {
            if k_actual > p {
                warn!("support grew from {p} to {k_actual} buses at outer iteration {outer}");
            }
        }
        let done = prev_actual == Some(k_actual) || k == 1;
        prev = sol;
        prev_c = c;
        prev_actual = Some(k_actual);
        if done {
            break;
        }
        hook.adjust(&step, &mut cfg.c_high, &mut cfg.c_low, &mut cfg.rate);
        cfg.validate()?;
        k = (((k.min(k_actual)) as f64 * cfg.rate).floor() as usize).max(1);
    }
    Ok(LocalizeOutcome {
        solution: prev,
        enforcers: prev_c,
        least_squares: l2,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub c: f64,
    pub solution: InfeasibilitySolution,
    /// `(c, sparsity_count)` for every probe, in evaluation order.
    pub probes: Vec<(f64, usize)>,
}

/// Bisects a uniform enforcer until the support has exactly `target` buses.
///
/// Relies on the count falling as `c` grows. The upper end starts at
/// `c_high` and doubles until the count is at most `target`.
pub fn calibrate_uniform_c(
    model: &EcfModel,
    warm: &InfeasibilitySolution,
    target: usize,
    cfg: &SparsityConfig,
    opts: &SolverOptions,
) -> Result<Calibration> {
    let n_inj = model.injection_set().len();
    let mut probes = Vec::new();
    let probe =
        |c: f64, probes: &mut Vec<(f64, usize)>| -> Result<(usize, InfeasibilitySolution)> {
            let sol = solve_sparse(model, &EnforcerVector::uniform(n_inj, c)?, warm, cfg, opts)?;
            if !sol.is_converged() {
                return Err(Error::Diverged(format!(
                    "uniform enforcer {c} did not converge"
                )));
            }
            let n = sparsity_count(&sol, cfg.tau);
            probes.push((c, n));
            Ok((n, sol))
        };
    let (mut lo, mut hi) = (0.0, cfg.c_high);
    for _ in 0..20 {
        let (n, sol) = probe(hi, &mut probes)?;
        if n == target {
            return Ok(Calibration {
                c: hi,
                solution: sol,
                probes,
            });
        }
        if n < target {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (n, sol) = probe(mid, &mut probes)?;
        if n == target {
            return Ok(Calibration {
                c: mid,
                solution: sol,
                probes,
            });
        }
        if n > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Diverged(format!(
        "no uniform enforcer gives exactly {target} buses"
    )))
}

/// Logs whether each active major bus carries both current components.
fn log_bus_coupling(model: &EcfModel, sol: &InfeasibilitySolution, c: &EnforcerVector, tau: f64) {
    for &k in c.major() {
        if sol.per_bus_mag[k] > tau {
            let (re, im) = (sol.i_f[2 * k].abs(), sol.i_f[2 * k + 1].abs());
            let both = re > tau / 10.0 && im > tau / 10.0;
            let id = model.bus_ids()[sol.injection_buses[k]];
            info!("major bus {id}: |re| {re:.3e}, |im| {im:.3e}, both components active: {both}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::two_bus;

    #[test]
    fn feasible_network_needs_no_current() {
        let model = EcfModel::new(&two_bus(0.5, 0.2)).unwrap();
        let out = localize(
            &model,
            &SparsityConfig::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(out.solution.status, SolveStatus::Converged);
        assert!(out.solution.max_magnitude() < 1e-6);
    }

    #[test]
    fn two_bus_localizes_to_load() {
        let model = EcfModel::new(&two_bus(20.0, 5.0)).unwrap();
        let out = localize(
            &model,
            &SparsityConfig::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(out.solution.status, SolveStatus::Converged);
        assert_eq!(out.trace.last().unwrap().k_actual, 1);
        assert_eq!(out.trace[0].k_goal, 2);
    }

    #[test]
    fn unconverged_warm_start_rejected() {
        let model = EcfModel::new(&two_bus(20.0, 5.0)).unwrap();
        let mut l2 = solve_l2_with_model(&model, &SolverOptions::default()).unwrap();
        l2.status = SolveStatus::Diverged;
        assert!(localize_k_sparse(
            &model,
            &l2,
            1,
            &SparsityConfig::default(),
            &SolverOptions::default()
        )
        .is_err());
    }
}
