use log::debug;

use super::{init_bounds, sparse_objective, EnforcerVector, SparsityConfig};
use crate::ecf::{EcfModel, StateVector};
use crate::error::{Error, Result};
use crate::linsolve::{norm_inf, CscMatrix};
use crate::pfcore::{
    damping_scale, per_bus_magnitudes, InfeasibilitySolution, KktNewton, SolveStatus, SolverOptions,
};

const FRACTION_TO_BOUNDARY: f64 = 0.995;
const MAX_HALVINGS: usize = 10;

struct Point {
    x: StateVector,
    i: Vec<f64>,
    t: Vec<f64>,
    mu_u: Vec<f64>,
    mu_l: Vec<f64>,
    lambda: Vec<f64>,
}

struct Residuals {
    jac: CscMatrix,
    r_x: Vec<f64>,
    r_a: Vec<f64>,
    r_b: Vec<f64>,
    r_c: Vec<f64>,
    r_d: Vec<f64>,
    r_p: Vec<f64>,
}

impl Residuals {
    fn feasibility(&self) -> f64 {
        [&self.r_x, &self.r_a, &self.r_b, &self.r_p]
            .iter()
            .map(|v| norm_inf(v))
            .fold(0.0, f64::max)
    }

    fn complementarity(&self) -> f64 {
        norm_inf(&self.r_c).max(norm_inf(&self.r_d))
    }
}

/// Primal-dual interior-point solve of the enforcer-weighted problem,
/// warm-started from `warm`'s state, currents and multipliers.
///
/// ε starts at `cfg.epsilon0` and shrinks by `cfg.epsilon_factor` after each
/// stage whose residuals fall below `10ε`; the last stage runs at
/// `cfg.epsilon_min` and requires `opts.tol` on the feasibility residuals and
/// `epsilon_min` on complementarity. Components with `c_j = 0` are
/// unbounded and skip the barrier. A stage that exhausts `opts.max_iter`
/// yields [`SolveStatus::Diverged`] with the last iterate.
pub fn solve_sparse(
    model: &EcfModel,
    c: &EnforcerVector,
    warm: &InfeasibilitySolution,
    cfg: &SparsityConfig,
    opts: &SolverOptions,
) -> Result<InfeasibilitySolution> {
    cfg.validate()?;
    opts.validate()?;
    let m = model.n_eq();
    let inj = model.injection_set();
    let d = inj.dim();
    if c.len() != inj.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} enforcers for {} injection buses",
            c.len(),
            inj.len()
        )));
    }
    if warm.x.as_slice().len() != m || warm.i_f.len() != d || warm.lambda.len() != m {
        return Err(Error::DimensionMismatch(
            "warm start does not match the model".into(),
        ));
    }
    let cw = c.component_weights();
    let bounded: Vec<bool> = cw.iter().map(|&v| v > 0.0).collect();
    let b = init_bounds(&warm.i_f, &cw, cfg.margin, cfg.epsilon0);
    let mut p = Point {
        x: warm.x.clone(),
        i: warm.i_f.clone(),
        t: b.t,
        mu_u: b.mu_u,
        mu_l: b.mu_l,
        lambda: warm.lambda.clone(),
    };

    let mut newton = KktNewton::new();
    let mut eps = cfg.epsilon0;
    let mut iterations = 0;
    let mut status = SolveStatus::Diverged;
    let mut last_norm = f64::INFINITY;
    'stages: loop {
        let last = eps <= cfg.epsilon_min;
        let (feas_tol, comp_tol) = if last {
            (opts.tol, cfg.epsilon_min)
        } else {
            ((10.0 * eps).max(opts.tol), 10.0 * eps)
        };
        let mut inner = 0;
        loop {
            let r = match residuals(model, &p, &cw, &bounded, eps) {
                Ok(r) => r,
                Err(Error::VoltageCollapse { .. }) => break 'stages,
                Err(e) => return Err(e),
            };
            let (feas, comp) = (r.feasibility(), r.complementarity());
            last_norm = feas.max(comp);
            debug!("ipm eps {eps:.1e} iter {inner}: feas {feas:.3e} comp {comp:.3e}");
            if feas <= feas_tol && comp <= comp_tol {
                break;
            }
            if inner == opts.max_iter || !last_norm.is_finite() {
                break 'stages;
            }
            if !newton_step(model, &mut newton, &mut p, &r, &bounded, opts.damping)? {
                break 'stages;
            }
            inner += 1;
            iterations += 1;
        }
        if last {
            status = SolveStatus::Converged;
            break;
        }
        eps = (eps * cfg.epsilon_factor).max(cfg.epsilon_min);
    }

    for j in 0..d {
        if !bounded[j] {
            p.t[j] = p.i[j].abs();
        }
    }
    Ok(InfeasibilitySolution {
        status,
        objective: sparse_objective(&p.i, c),
        per_bus_mag: per_bus_magnitudes(&p.i),
        x: p.x,
        i_f: p.i,
        lambda: p.lambda,
        t: p.t,
        mu_u: p.mu_u,
        mu_l: p.mu_l,
        injection_buses: inj.buses.clone(),
        iterations,
        kkt_residual: last_norm,
        epsilon: eps,
    })
}

fn residuals(
    model: &EcfModel,
    p: &Point,
    cw: &[f64],
    bounded: &[bool],
    eps: f64,
) -> Result<Residuals> {
    let sys = model.system();
    let inj = model.injection_set();
    let mut r_p = model.residual(p.x.as_slice())?;
    for (j, v) in p.i.iter().enumerate() {
        r_p[inj.row_of(sys, j)] += v;
    }
    let jac = model.jacobian(p.x.as_slice())?;
    let r_x = jac.tr_mul_vec(&p.lambda);
    let lam_s = inj.gather(sys, &p.lambda);
    let d = cw.len();
    let (mut r_a, mut r_b, mut r_c, mut r_d) =
        (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for j in 0..d {
        r_a[j] = p.i[j] + lam_s[j];
        if bounded[j] {
            r_a[j] += p.mu_u[j] - p.mu_l[j];
            r_b[j] = cw[j] - p.mu_u[j] - p.mu_l[j];
            r_c[j] = p.mu_u[j] * (p.t[j] - p.i[j]) - eps;
            r_d[j] = p.mu_l[j] * (p.t[j] + p.i[j]) - eps;
        }
    }
    Ok(Residuals {
        jac,
        r_x,
        r_a,
        r_b,
        r_c,
        r_d,
        r_p,
    })
}

/// One damped Newton step on the condensed system. The bound variables are
/// eliminated per component, leaving
/// `[[H, Jᵀ], [J, −S W Sᵀ]] [dx; dλ] = [−r_x; −r_p + S W (r_a + κ)]`.
/// Returns `false` if no step keeps the voltages above the floor.
fn newton_step(
    model: &EcfModel,
    newton: &mut KktNewton,
    p: &mut Point,
    r: &Residuals,
    bounded: &[bool],
    damping: f64,
) -> Result<bool> {
    let sys = model.system();
    let inj = model.injection_set();
    let d = bounded.len();
    let (mut w, mut kappa, mut beta) = (vec![1.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut sig_u, mut sig_l) = (vec![0.0; d], vec![0.0; d]);
    for j in 0..d {
        if !bounded[j] {
            continue;
        }
        let su = p.t[j] - p.i[j];
        let sl = p.t[j] + p.i[j];
        let (a, b) = (p.mu_u[j] / su, p.mu_l[j] / sl);
        let s = a + b;
        beta[j] = r.r_b[j] + r.r_c[j] / su + r.r_d[j] / sl;
        kappa[j] = -r.r_c[j] / su + r.r_d[j] / sl + (a - b) * beta[j] / s;
        w[j] = 1.0 / (1.0 + 4.0 * a * b / s);
        sig_u[j] = a;
        sig_l[j] = b;
    }
    let rhs_x: Vec<f64> = r.r_x.iter().map(|v| -v).collect();
    let shifted: Vec<f64> = (0..d).map(|j| w[j] * (r.r_a[j] + kappa[j])).collect();
    let mut rhs_l = inj.scatter(sys, &shifted);
    for (v, rp) in rhs_l.iter_mut().zip(&r.r_p) {
        *v -= rp;
    }
    let (dx, dlam) = newton.solve(
        model,
        p.x.as_slice(),
        &p.lambda,
        &r.jac,
        &w,
        &[],
        &rhs_x,
        &rhs_l,
    )?;
    let dlam_s = inj.gather(sys, &dlam);

    let mut di = vec![0.0; d];
    let (mut dt, mut dmu, mut dml) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut step: f64 = 1.0;
    let mut limit = |v: f64, dv: f64| {
        if dv < 0.0 {
            step = step.min(FRACTION_TO_BOUNDARY * (-v / dv));
        }
    };
    for j in 0..d {
        di[j] = w[j] * (-r.r_a[j] - kappa[j] - dlam_s[j]);
        if !bounded[j] {
            continue;
        }
        let su = p.t[j] - p.i[j];
        let sl = p.t[j] + p.i[j];
        let (a, b) = (sig_u[j], sig_l[j]);
        dt[j] = ((a - b) * di[j] - beta[j]) / (a + b);
        dmu[j] = -r.r_c[j] / su - a * dt[j] + a * di[j];
        dml[j] = -r.r_d[j] / sl - b * dt[j] - b * di[j];
        limit(su, dt[j] - di[j]);
        limit(sl, dt[j] + di[j]);
        limit(p.mu_u[j], dmu[j]);
        limit(p.mu_l[j], dml[j]);
    }
    step = step.min(damping_scale(&dx, model.n_bus(), damping));

    let mut accepted = None;
    for _ in 0..=MAX_HALVINGS {
        let mut trial = p.x.clone();
        for (xi, dxi) in trial.as_mut_slice().iter_mut().zip(&dx) {
            *xi += step * dxi;
        }
        match model.residual(trial.as_slice()) {
            Ok(_) => {
                accepted = Some(trial);
                break;
            }
            Err(Error::VoltageCollapse { .. }) => step *= 0.5,
            Err(e) => return Err(e),
        }
    }
    let Some(x) = accepted else { return Ok(false) };
    p.x = x;
    for j in 0..d {
        p.i[j] += step * di[j];
        if bounded[j] {
            p.t[j] += step * dt[j];
            p.mu_u[j] += step * dmu[j];
            p.mu_l[j] += step * dml[j];
        }
    }
    for (l, dl) in p.lambda.iter_mut().zip(&dlam) {
        *l += step * dl;
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::super::{assign_enforcers, verify_kkt};
    use super::*;
    use crate::netmodel::tests::two_bus;
    use crate::pfcore::solve_l2_with_model;

    #[test]
    fn zero_enforcer_reproduces_least_squares() {
        let model = EcfModel::new(&two_bus(20.0, 5.0)).unwrap();
        let opts = SolverOptions::default();
        let l2 = solve_l2_with_model(&model, &opts).unwrap();
        let c = EnforcerVector::uniform(1, 0.0).unwrap();
        let sol = solve_sparse(&model, &c, &l2, &SparsityConfig::default(), &opts).unwrap();
        assert!(sol.is_converged());
        assert!((sol.per_bus_mag[0] - l2.per_bus_mag[0]).abs() < 1e-7);
    }

    #[test]
    fn bounded_solve_satisfies_kkt() {
        let model = EcfModel::new(&two_bus(20.0, 5.0)).unwrap();
        let opts = SolverOptions::default();
        let cfg = SparsityConfig::default();
        let l2 = solve_l2_with_model(&model, &opts).unwrap();
        let c = assign_enforcers(&l2.per_bus_mag, 1, cfg.c_high, cfg.c_low).unwrap();
        let sol = solve_sparse(&model, &c, &l2, &cfg, &opts).unwrap();
        assert!(sol.is_converged());
        let rep = verify_kkt(&model, &sol, &c, cfg.epsilon_min, cfg.tau).unwrap();
        let bound = 10.0 * cfg.epsilon_min + opts.tol;
        assert!(rep.max_residual() <= bound, "{rep:?}");
        assert!(rep.threshold_gap <= bound, "{rep:?}");
        for j in 0..2 {
            assert!(sol.t[j] - sol.i_f[j] > 0.0 && sol.t[j] + sol.i_f[j] > 0.0);
            assert!(sol.mu_u[j] > 0.0 && sol.mu_l[j] > 0.0);
        }
    }
}
