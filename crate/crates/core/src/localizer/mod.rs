//! Sparse infeasibility localization.
//!
//! [`solve_sparse`] is a primal-dual interior-point method for
//!
//! ```text
//! min  ½‖I_f‖² + Σ_j c_j |I_f,j|   s.t.  g(x) + S I_f = 0
//! ```
//!
//! with `|I_f,j|` replaced by a slack `t_j ≥ ±I_f,j`. A uniform `c` gives the
//! plain L1 problem; a two-level bus-wise `c` steers the support towards a
//! chosen set of buses. [`localize`] shrinks that set geometrically until the
//! support stops changing.

mod ipm;
mod outer;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::ecf::EcfModel;
use crate::error::{Error, Result};
use crate::linsolve::norm_inf;
use crate::pfcore::InfeasibilitySolution;

pub use ipm::solve_sparse;
pub use outer::{
    calibrate_uniform_c, localize, localize_k_sparse, localize_with_hook, Calibration,
    EnforcerHook, LocalizeOutcome, OuterIteration,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnforcerProvenance {
    UniformScalar {
        c: f64,
    },
    /// `major` holds injection-bus positions (indices into the injection set).
    BusWise {
        c_high: f64,
        c_low: f64,
        major: Vec<usize>,
    },
}

/// One enforcer per injection bus, shared by its real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnforcerVector {
    pub c: Vec<f64>,
    pub provenance: EnforcerProvenance,
}

impl EnforcerVector {
    pub fn uniform(n_injection: usize, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "enforcer must be finite and >= 0, got {c}"
            )));
        }
        Ok(Self {
            c: vec![c; n_injection],
            provenance: EnforcerProvenance::UniformScalar { c },
        })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Per-component weights: `c[k]` repeated for `2k` and `2k + 1`.
    pub fn component_weights(&self) -> Vec<f64> {
        self.c.iter().flat_map(|&v| [v, v]).collect()
    }

    pub fn major(&self) -> &[usize] {
        match &self.provenance {
            EnforcerProvenance::BusWise { major, .. } => major,
            EnforcerProvenance::UniformScalar { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    /// Sparse goal for a single k-sparse solve.
    pub k: usize,
    pub c_high: f64,
    pub c_low: f64,
    /// Shrinkage rate of the outer loop.
    pub rate: f64,
    /// Per-bus magnitude above which a bus counts as infeasible.
    pub tau: f64,
    pub epsilon0: f64,
    pub epsilon_min: f64,
    pub epsilon_factor: f64,
    /// Initial gap between `t` and `|I_f|`.
    pub margin: f64,
    pub max_outer: usize,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            k: 1,
            c_high: 10.0,
            c_low: 0.1,
            rate: 0.75,
            tau: 1e-4,
            epsilon0: 1e-2,
            epsilon_min: 1e-13,
            epsilon_factor: 0.2,
            margin: 0.1,
            max_outer: 50,
        }
    }
}

impl SparsityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.c_low > 0.0 && self.c_low < self.c_high && self.c_high.is_finite()) {
            return bad(format!(
                "need 0 < c_low < c_high, got {} and {}",
                self.c_low, self.c_high
            ));
        }
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return bad(format!("rate must lie in (0, 1), got {}", self.rate));
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.epsilon_min > 0.0
            && self.epsilon_min <= self.epsilon0
            && self.epsilon0.is_finite())
        {
            return bad(format!(
                "need 0 < epsilon_min <= epsilon0, got {} and {}",
                self.epsilon_min, self.epsilon0
            ));
        }
        if !(self.epsilon_factor > 0.0 && self.epsilon_factor < 1.0) {
            return bad(format!(
                "epsilon_factor must lie in (0, 1), got {}",
                self.epsilon_factor
            ));
        }
        if !(self.margin > 0.0) {
            return bad(format!("margin must be > 0, got {}", self.margin));
        }
        if self.max_outer == 0 {
            return bad("max_outer must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub t: Vec<f64>,
    pub mu_u: Vec<f64>,
    pub mu_l: Vec<f64>,
}

/// Strictly interior start for the bound variables.
///
/// `t = |I_f| + margin`. The multipliers sum to `c` and are split so that
/// both complementarity products are equal, each floored at `ε / (2t)`.
/// Components with `c = 0` carry no bound and get zero multipliers.
pub fn init_bounds(i_f: &[f64], c: &[f64], margin: f64, epsilon: f64) -> Bounds {
    let mut b = Bounds {
        t: Vec::with_capacity(i_f.len()),
        mu_u: Vec::with_capacity(i_f.len()),
        mu_l: Vec::with_capacity(i_f.len()),
    };
    for (&i, &cj) in i_f.iter().zip(c) {
        let t = i.abs() + margin;
        let (su, sl) = (t - i, t + i);
        let (mut mu, mut ml) = (cj * sl / (su + sl), cj * su / (su + sl));
        if cj > 0.0 {
            let floor = epsilon / (2.0 * t);
            mu = mu.max(floor);
            ml = ml.max(floor);
        }
        b.t.push(t);
        b.mu_u.push(mu);
        b.mu_l.push(ml);
    }
    b
}

/// Two-level enforcers: the `k` largest magnitudes get `c_low`, the rest
/// `c_high`. Ties go to the lower injection position. `k` beyond the number
/// of injection buses is clamped.
pub fn assign_enforcers(
    per_bus_mag: &[f64],
    k: usize,
    c_high: f64,
    c_low: f64,
) -> Result<EnforcerVector> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if !(c_low < c_high) {
        return Err(Error::InvalidConfig(format!(
            "need c_low < c_high, got {c_low} and {c_high}"
        )));
    }
    let n = per_bus_mag.len();
    let k = if k > n {
        warn!("sparse goal {k} exceeds {n} injection buses, clamping");
        n
    } else {
        k
    };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| per_bus_mag[b].total_cmp(&per_bus_mag[a]).then(a.cmp(&b)));
    let mut major: Vec<usize> = idx[..k].to_vec();
    major.sort_unstable();
    let mut c = vec![c_high; n];
    for &m in &major {
        c[m] = c_low;
    }
    Ok(EnforcerVector {
        c,
        provenance: EnforcerProvenance::BusWise {
            c_high,
            c_low,
            major,
        },
    })
}

pub fn sparsity_count(sol: &InfeasibilitySolution, tau: f64) -> usize {
    sol.per_bus_mag.iter().filter(|&&m| m > tau).count()
}

/// Injection positions with magnitude above `tau`, largest first.
pub fn support(sol: &InfeasibilitySolution, tau: f64) -> Vec<usize> {
    let mut s: Vec<usize> = (0..sol.per_bus_mag.len())
        .filter(|&k| sol.per_bus_mag[k] > tau)
        .collect();
    s.sort_by(|&a, &b| {
        sol.per_bus_mag[b]
            .total_cmp(&sol.per_bus_mag[a])
            .then(a.cmp(&b))
    });
    s
}

/// Residual norms of the perturbed optimality conditions. All entries are
/// infinity norms or maxima of absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖Jᵀλ‖`.
    pub stationarity_x: f64,
    /// `‖I_f + Sᵀλ + μ_U − μ_L‖`.
    pub stationarity_if: f64,
    /// `‖μ_U + μ_L − c‖`.
    pub dual_feas: f64,
    pub comp_upper: f64,
    pub comp_lower: f64,
    /// `‖g + S I_f‖`.
    pub primal_feas: f64,
    /// Largest `||I_f,j| − (|λ_j| − c_j)|` over components with `|I_f,j| > tau`.
    pub threshold_gap: f64,
    /// Largest `|λ_j| − c_j` (floored at 0) over components with `|I_f,j| ≤ tau`.
    pub blocked_excess: f64,
    /// Per-bus variant of `threshold_gap`, using complex magnitudes.
    pub bus_threshold_gap: f64,
    pub epsilon: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity_x,
            self.stationarity_if,
            self.dual_feas,
            self.comp_upper,
            self.comp_lower,
            self.primal_feas,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluates the optimality conditions of a sparse solution at barrier
/// parameter `epsilon`.
///
/// Components with `c_j = 0` are unbounded: their bound terms are skipped.
pub fn verify_kkt(
    model: &EcfModel,
    sol: &InfeasibilitySolution,
    c: &EnforcerVector,
    epsilon: f64,
    tau: f64,
) -> Result<KktReport> {
    let sys = model.system();
    let inj = model.injection_set();
    let d = inj.dim();
    if c.len() != inj.len() || sol.i_f.len() != d || sol.lambda.len() != model.n_eq() {
        return Err(Error::DimensionMismatch(
            "solution does not match the model".into(),
        ));
    }
    let cw = c.component_weights();
    let bounded = sol.t.len() == d && sol.mu_u.len() == d && sol.mu_l.len() == d;
    let lam = inj.gather(sys, &sol.lambda);
    let jac = model.jacobian(sol.x.as_slice())?;
    let mut g = model.residual(sol.x.as_slice())?;
    for (j, v) in sol.i_f.iter().enumerate() {
        g[inj.row_of(sys, j)] += v;
    }
    let mut r = KktReport {
        stationarity_x: norm_inf(&jac.tr_mul_vec(&sol.lambda)),
        stationarity_if: 0.0,
        dual_feas: 0.0,
        comp_upper: 0.0,
        comp_lower: 0.0,
        primal_feas: norm_inf(&g),
        threshold_gap: 0.0,
        blocked_excess: 0.0,
        bus_threshold_gap: 0.0,
        epsilon,
    };
    for j in 0..d {
        let i = sol.i_f[j];
        let mut st = i + lam[j];
        if cw[j] > 0.0 && bounded {
            let (t, mu, ml) = (sol.t[j], sol.mu_u[j], sol.mu_l[j]);
            st += mu - ml;
            r.dual_feas = r.dual_feas.max((mu + ml - cw[j]).abs());
            r.comp_upper = r.comp_upper.max((mu * (t - i) - epsilon).abs());
            r.comp_lower = r.comp_lower.max((ml * (t + i) - epsilon).abs());
        }
        r.stationarity_if = r.stationarity_if.max(st.abs());
        if i.abs() > tau {
            r.threshold_gap = r
                .threshold_gap
                .max((i.abs() - (lam[j].abs() - cw[j])).abs());
        } else {
            r.blocked_excess = r.blocked_excess.max(lam[j].abs() - cw[j]);
        }
    }
    for (k, &m) in sol.per_bus_mag.iter().enumerate() {
        if m > tau {
            let lm = lam[2 * k].hypot(lam[2 * k + 1]);
            r.bus_threshold_gap = r.bus_threshold_gap.max((m - (lm - c.c[k])).abs());
        }
    }
    Ok(r)
}

/// `½‖I_f‖² + Σ_j c_j |I_f,j|`.
pub fn sparse_objective(i_f: &[f64], c: &EnforcerVector) -> f64 {
    i_f.iter()
        .zip(c.component_weights())
        .map(|(i, cj)| 0.5 * i * i + cj * i.abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_bounds_symmetric_at_zero() {
        let b = init_bounds(&[0.0, 0.0], &[1.0, 0.4], 0.1, 1e-2);
        assert_eq!(b.t, vec![0.1, 0.1]);
        for (got, want) in b.mu_u.iter().chain(&b.mu_l).zip([0.5, 0.2, 0.5, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn init_bounds_nonzero_current() {
        let b = init_bounds(&[0.5], &[1.0], 0.1, 1e-2);
        assert!((b.t[0] - 0.6).abs() < 1e-15);
        assert!((b.mu_u[0] + b.mu_l[0] - 1.0).abs() < 1e-15);
        assert!(b.mu_u[0] > 0.0 && b.mu_l[0] > 0.0);
        let pu = b.mu_u[0] * (b.t[0] - 0.5);
        let pl = b.mu_l[0] * (b.t[0] + 0.5);
        assert!((pu - pl).abs() < 1e-15);
    }

    #[test]
    fn assign_picks_largest() {
        let e = assign_enforcers(&[0.3, 0.1, 0.5], 1, 10.0, 0.1).unwrap();
        assert_eq!(e.c, vec![10.0, 10.0, 0.1]);
        assert_eq!(e.major(), &[2]);
    }

    #[test]
    fn assign_ties_go_to_lower_index() {
        let e = assign_enforcers(&[0.2; 4], 2, 10.0, 0.1).unwrap();
        assert_eq!(e.c, vec![0.1, 0.1, 10.0, 10.0]);
    }

    #[test]
    fn assign_clamps_and_rejects() {
        assert_eq!(
            assign_enforcers(&[1.0, 2.0], 5, 10.0, 0.1).unwrap().c,
            vec![0.1, 0.1]
        );
        assert!(assign_enforcers(&[1.0], 0, 10.0, 0.1).is_err());
        assert!(assign_enforcers(&[1.0], 1, 0.1, 10.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SparsityConfig::default().validate().is_ok());
        let bad = [
            SparsityConfig {
                c_low: 20.0,
                ..Default::default()
            },
            SparsityConfig {
                rate: 1.0,
                ..Default::default()
            },
            SparsityConfig {
                k: 0,
                ..Default::default()
            },
            SparsityConfig {
                tau: 0.0,
                ..Default::default()
            },
            SparsityConfig {
                epsilon_min: 1.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn objective_groups_components() {
        let c = EnforcerVector::uniform(2, 1.0).unwrap();
        let v = sparse_objective(&[1.0, -1.0, 0.0, 2.0], &c);
        assert!((v - (0.5 + 0.5 + 2.0 + 1.0 + 1.0 + 2.0)).abs() < 1e-15);
    }
}
