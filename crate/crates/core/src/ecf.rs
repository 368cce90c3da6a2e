//! Equivalent-circuit (current-voltage) formulation of the network balance.
//!
//! Unknowns are rectangular bus voltages plus the reactive output of every
//! voltage-controlled generator and the slack's active output:
//!
//! ```text
//! x = [ vr(0..n) | vi(0..n) | qg(pv buses..., slack) | pg_slack ]
//! ```
//!
//! Rows are split real/imaginary KCL at every bus, one magnitude row per PV
//! bus and two rows pinning the slack voltage:
//!
//! ```text
//! g = [ kcl_re(0..n) | kcl_im(0..n) | |V|² - v_set² (pv) | vr - vr_ref, vi - vi_ref ]
//! ```
//!
//! Current leaving a bus is positive. A constant-power demand `P + jQ` draws
//! `conj(S) / conj(V)`; generation enters with the opposite sign.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{CscMatrix, TripletMatrix};
use crate::netmodel::{validate, BusId, BusKind, Network};

/// Smallest bus voltage magnitude at which the load model is evaluated.
pub const V_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Re,
    Im,
}

/// Row and column layout shared by the residual, Jacobian and solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintSystem {
    n_bus: usize,
    n_pv: usize,
}

impl ConstraintSystem {
    pub fn n_bus(&self) -> usize {
        self.n_bus
    }

    pub fn n_pv(&self) -> usize {
        self.n_pv
    }

    /// Equality rows; also the number of state unknowns.
    pub fn n_eq(&self) -> usize {
        2 * self.n_bus + self.n_pv + 2
    }

    pub fn kcl_row(&self, bus: usize, part: Part) -> usize {
        match part {
            Part::Re => bus,
            Part::Im => self.n_bus + bus,
        }
    }

    pub fn is_kcl_row(&self, row: usize) -> bool {
        row < 2 * self.n_bus
    }

    pub fn pv_row(&self, k: usize) -> usize {
        2 * self.n_bus + k
    }

    pub fn slack_rows(&self) -> [usize; 2] {
        let base = 2 * self.n_bus + self.n_pv;
        [base, base + 1]
    }

    pub fn vr_col(&self, bus: usize) -> usize {
        bus
    }

    pub fn vi_col(&self, bus: usize) -> usize {
        self.n_bus + bus
    }

    /// Column of the `k`-th reactive unknown (PV buses first, slack last).
    pub fn qg_col(&self, k: usize) -> usize {
        2 * self.n_bus + k
    }

    pub fn pg_slack_col(&self) -> usize {
        2 * self.n_bus + self.n_pv + 1
    }
}

/// Buses that may carry an infeasibility current, ascending by index.
///
/// Component `2k` is the real part at `buses[k]`, `2k + 1` the imaginary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSet {
    pub buses: Vec<usize>,
}

impl InjectionSet {
    pub fn dim(&self) -> usize {
        2 * self.buses.len()
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// KCL row receiving component `j`.
    pub fn row_of(&self, system: &ConstraintSystem, j: usize) -> usize {
        let part = if j.is_multiple_of(2) { Part::Re } else { Part::Im };
        system.kcl_row(self.buses[j / 2], part)
    }

    /// `S · v`: scatter component values into an `n_eq` row vector.
    pub fn scatter(&self, system: &ConstraintSystem, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; system.n_eq()];
        for (j, &vj) in v.iter().enumerate() {
            out[self.row_of(system, j)] += vj;
        }
        out
    }

    /// `Sᵀ · rows`: gather the injection rows of an `n_eq` vector.
    pub fn gather(&self, system: &ConstraintSystem, rows: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| rows[self.row_of(system, j)])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    n_bus: usize,
    n_pv: usize,
    values: Vec<f64>,
}

impl StateVector {
    pub fn from_vec(system: &ConstraintSystem, values: Vec<f64>) -> Result<Self> {
        if values.len() != system.n_eq() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} entries, layout needs {}",
                values.len(),
                system.n_eq()
            )));
        }
        Ok(Self {
            n_bus: system.n_bus,
            n_pv: system.n_pv,
            values,
        })
    }

    pub fn vr(&self) -> &[f64] {
        &self.values[..self.n_bus]
    }

    pub fn vi(&self) -> &[f64] {
        &self.values[self.n_bus..2 * self.n_bus]
    }

    /// Reactive unknowns: PV buses in ascending order, then the slack.
    pub fn qg(&self) -> &[f64] {
        &self.values[2 * self.n_bus..2 * self.n_bus + self.n_pv + 1]
    }

    pub fn pg_slack(&self) -> f64 {
        self.values[2 * self.n_bus + self.n_pv + 1]
    }

    pub fn voltage(&self, bus: usize) -> Complex64 {
        Complex64::new(self.values[bus], self.values[self.n_bus + bus])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Flat,
    FromCase,
}

/// Compiled form of a [`Network`]: admittance rows, aggregated demand and
/// the variable layout.
#[derive(Debug, Clone)]
pub struct EcfModel {
    system: ConstraintSystem,
    slack: usize,
    bus_ids: Vec<BusId>,
    /// Per bus: sorted `(column bus, Y_ij)` including the diagonal.
    y_rows: Vec<Vec<(usize, Complex64)>>,
    /// Demand net of scheduled (non-slack) active generation.
    p_fixed: Vec<f64>,
    q_fixed: Vec<f64>,
    /// Bus of each reactive unknown.
    q_bus: Vec<usize>,
    q_var: Vec<Option<usize>>,
    v_set_pv: Vec<f64>,
    slack_ref: Complex64,
    injection: InjectionSet,
    v_case: Vec<Complex64>,
    q_case: Vec<f64>,
    p_slack_case: f64,
}

impl EcfModel {
    pub fn new(net: &Network) -> Result<Self> {
        let diags = validate(net);
        if !diags.is_empty() {
            return Err(Error::InvalidTopology(diags));
        }
        let n = net.n_bus();
        let lookup = net.bus_lookup();
        let slack = net.slack_index().expect("validated network has a slack");

        let mut y_rows: Vec<Vec<(usize, Complex64)>> = (0..n)
            .map(|i| vec![(i, Complex64::new(0.0, 0.0))])
            .collect();
        for (i, bus) in net.buses.iter().enumerate() {
            y_rows[i][0].1 += Complex64::new(bus.shunt_g, bus.shunt_b);
        }
        for br in net.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (lookup[&br.from_bus], lookup[&br.to_bus]);
            let ys = Complex64::new(br.r, br.x).inv();
            let a = Complex64::from_polar(br.tap, br.shift);
            let ytt = ys + Complex64::new(0.0, br.b_charging / 2.0);
            let yff = ytt / (br.tap * br.tap);
            let yft = -ys / a.conj();
            let ytf = -ys / a;
            y_rows[f].push((f, yff));
            y_rows[f].push((t, yft));
            y_rows[t].push((f, ytf));
            y_rows[t].push((t, ytt));
        }
        for row in y_rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
            for &(c, y) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += y,
                    _ => merged.push((c, y)),
                }
            }
            *row = merged;
        }

        let mut p_fixed = vec![0.0; n];
        let mut q_fixed = vec![0.0; n];
        for load in &net.loads {
            let i = lookup[&load.bus];
            p_fixed[i] += load.p;
            q_fixed[i] += load.q;
        }
        let mut q_case = vec![0.0; n];
        let mut p_slack_case = 0.0;
        for gen in net.generators.iter().filter(|g| g.in_service) {
            let i = lookup[&gen.bus];
            q_case[i] += gen.q_init;
            if i == slack {
                p_slack_case += gen.p_set;
            } else {
                p_fixed[i] -= gen.p_set;
            }
        }

        let pv: Vec<usize> = (0..n)
            .filter(|&i| net.buses[i].kind == BusKind::Pv)
            .collect();
        let mut q_bus = pv.clone();
        q_bus.push(slack);
        let mut q_var = vec![None; n];
        for (k, &b) in q_bus.iter().enumerate() {
            q_var[b] = Some(k);
        }
        let v_set_pv = pv.iter().map(|&i| net.buses[i].v_set).collect();
        let sb = &net.buses[slack];
        let slack_ref = Complex64::from_polar(sb.v_set, sb.theta_set);

        let injection = InjectionSet {
            buses: (0..n).filter(|&i| i != slack).collect(),
        };

        Ok(Self {
            system: ConstraintSystem {
                n_bus: n,
                n_pv: pv.len(),
            },
            slack,
            bus_ids: net.buses.iter().map(|b| b.id).collect(),
            y_rows,
            p_fixed,
            q_fixed,
            q_case: q_bus.iter().map(|&b| q_case[b]).collect(),
            q_bus,
            q_var,
            v_set_pv,
            slack_ref,
            injection,
            v_case: net
                .buses
                .iter()
                .map(|b| Complex64::from_polar(b.vm, b.va))
                .collect(),
            p_slack_case,
        })
    }

    pub fn system(&self) -> &ConstraintSystem {
        &self.system
    }

    pub fn n_bus(&self) -> usize {
        self.system.n_bus
    }

    pub fn n_eq(&self) -> usize {
        self.system.n_eq()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    pub fn injection_set(&self) -> &InjectionSet {
        &self.injection
    }

    /// Bus admittance row `i` as sorted `(j, Y_ij)` pairs.
    pub fn admittance_row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.y_rows[i]
    }

    /// Bus owning each state column.
    pub fn column_buses(&self) -> Vec<usize> {
        let s = &self.system;
        let mut out = vec![0; s.n_eq()];
        for i in 0..s.n_bus {
            out[s.vr_col(i)] = i;
            out[s.vi_col(i)] = i;
        }
        for (k, &b) in self.q_bus.iter().enumerate() {
            out[s.qg_col(k)] = b;
        }
        out[s.pg_slack_col()] = self.slack;
        out
    }

    /// Bus owning each equation row.
    pub fn row_buses(&self) -> Vec<usize> {
        let s = &self.system;
        let mut out = vec![0; s.n_eq()];
        for i in 0..s.n_bus {
            out[s.kcl_row(i, Part::Re)] = i;
            out[s.kcl_row(i, Part::Im)] = i;
        }
        for (k, &b) in self.q_bus[..s.n_pv].iter().enumerate() {
            out[s.pv_row(k)] = b;
        }
        for r in s.slack_rows() {
            out[r] = self.slack;
        }
        out
    }

    pub fn init_state(&self, mode: InitMode) -> StateVector {
        let n = self.system.n_bus;
        let mut v = vec![0.0; self.system.n_eq()];
        match mode {
            InitMode::Flat => {
                v[..n].fill(1.0);
                for (k, &b) in self.q_bus[..self.system.n_pv].iter().enumerate() {
                    v[b] = self.v_set_pv[k];
                }
                v[self.slack] = self.slack_ref.re;
                v[n + self.slack] = self.slack_ref.im;
            }
            InitMode::FromCase => {
                for (i, vc) in self.v_case.iter().enumerate() {
                    v[i] = vc.re;
                    v[n + i] = vc.im;
                }
                for (k, &q) in self.q_case.iter().enumerate() {
                    v[self.system.qg_col(k)] = q;
                }
                v[self.system.pg_slack_col()] = self.p_slack_case;
            }
        }
        StateVector {
            n_bus: n,
            n_pv: self.system.n_pv,
            values: v,
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.system.n_eq() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} entries, expected {}",
                x.len(),
                self.system.n_eq()
            )));
        }
        let n = self.system.n_bus;
        for i in 0..n {
            let m = x[i].hypot(x[n + i]);
            if !(m >= V_FLOOR) {
                return Err(Error::VoltageCollapse {
                    bus: i,
                    magnitude: m,
                });
            }
        }
        Ok(())
    }

    /// `conj(S)` of the net demand at bus `i` for state `x`.
    #[inline]
    fn net_demand_conj(&self, i: usize, x: &[f64]) -> Complex64 {
        let mut p = self.p_fixed[i];
        let mut q = self.q_fixed[i];
        if let Some(k) = self.q_var[i] {
            q -= x[self.system.qg_col(k)];
        }
        if i == self.slack {
            p -= x[self.system.pg_slack_col()];
        }
        Complex64::new(p, -q)
    }

    #[inline]
    fn voltage(&self, i: usize, x: &[f64]) -> Complex64 {
        Complex64::new(x[i], x[self.system.n_bus + i])
    }

    /// Network balance `g(x)`; length `n_eq`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let s = &self.system;
        let n = s.n_bus;
        let mut r = vec![0.0; s.n_eq()];
        for i in 0..n {
            let mut cur = Complex64::new(0.0, 0.0);
            for &(j, y) in &self.y_rows[i] {
                cur += y * self.voltage(j, x);
            }
            cur += self.net_demand_conj(i, x) / self.voltage(i, x).conj();
            r[i] = cur.re;
            r[n + i] = cur.im;
        }
        for (k, &b) in self.q_bus[..s.n_pv].iter().enumerate() {
            r[s.pv_row(k)] =
                x[b] * x[b] + x[n + b] * x[n + b] - self.v_set_pv[k] * self.v_set_pv[k];
        }
        let [r0, r1] = s.slack_rows();
        r[r0] = x[self.slack] - self.slack_ref.re;
        r[r1] = x[n + self.slack] - self.slack_ref.im;
        Ok(r)
    }

    /// Visits every Jacobian entry `(row, col, value)` in a fixed order, so
    /// the compressed pattern is identical for every state.
    pub fn for_each_jacobian_entry(
        &self,
        x: &[f64],
        mut f: impl FnMut(usize, usize, f64),
    ) -> Result<()> {
        self.check_state(x)?;
        let s = &self.system;
        let n = s.n_bus;
        for i in 0..n {
            let (re_row, im_row) = (i, n + i);
            let w = self.voltage(i, x).conj();
            let hp = -self.net_demand_conj(i, x) / (w * w);
            for &(j, y) in &self.y_rows[i] {
                // linear part: ∂/∂vr = Y, ∂/∂vi = jY; demand term h(conj V): h' and -j·h'
                let (mut d_vr, mut d_vi) = (y, times_j(y));
                if j == i {
                    d_vr += hp;
                    d_vi -= times_j(hp);
                }
                f(re_row, s.vr_col(j), d_vr.re);
                f(re_row, s.vi_col(j), d_vi.re);
                f(im_row, s.vr_col(j), d_vr.im);
                f(im_row, s.vi_col(j), d_vi.im);
            }
            let w_inv = w.inv();
            if let Some(k) = self.q_var[i] {
                // ∂h/∂qg = j / conj(V)
                let d = times_j(w_inv);
                f(re_row, s.qg_col(k), d.re);
                f(im_row, s.qg_col(k), d.im);
            }
            if i == self.slack {
                // ∂h/∂pg = -1 / conj(V)
                f(re_row, s.pg_slack_col(), -w_inv.re);
                f(im_row, s.pg_slack_col(), -w_inv.im);
            }
        }
        for (k, &b) in self.q_bus[..s.n_pv].iter().enumerate() {
            f(s.pv_row(k), s.vr_col(b), 2.0 * x[b]);
            f(s.pv_row(k), s.vi_col(b), 2.0 * x[n + b]);
        }
        let [r0, r1] = s.slack_rows();
        f(r0, s.vr_col(self.slack), 1.0);
        f(r1, s.vi_col(self.slack), 1.0);
        Ok(())
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<CscMatrix> {
        let m = self.system.n_eq();
        let mut t = TripletMatrix::with_capacity(m, m, self.jacobian_nnz_hint());
        self.for_each_jacobian_entry(x, |r, c, v| t.push(r, c, v))?;
        t.to_csc()
    }

    fn jacobian_nnz_hint(&self) -> usize {
        4 * self.y_rows.iter().map(Vec::len).sum::<usize>()
            + 4 * self.system.n_bus
            + 2 * self.system.n_pv
            + 2
    }

    /// Visits the lower and upper entries of `∑_r λ_r ∇²g_r(x)` in a fixed
    /// order. Only the demand terms and PV magnitude rows are nonlinear, so
    /// the result is block diagonal per bus.
    pub fn for_each_hessian_entry(
        &self,
        x: &[f64],
        lambda: &[f64],
        mut f: impl FnMut(usize, usize, f64),
    ) -> Result<()> {
        self.check_state(x)?;
        let s = &self.system;
        let n = s.n_bus;
        if lambda.len() != s.n_eq() {
            return Err(Error::DimensionMismatch(format!(
                "multiplier has {} entries, expected {}",
                lambda.len(),
                s.n_eq()
            )));
        }
        let mut pv_weight = vec![0.0; n];
        for (k, &b) in self.q_bus[..s.n_pv].iter().enumerate() {
            pv_weight[b] = 2.0 * lambda[s.pv_row(k)];
        }
        for i in 0..n {
            let (lr, li) = (lambda[i], lambda[n + i]);
            let dot = |z: Complex64| lr * z.re + li * z.im;
            let w = self.voltage(i, x).conj();
            let w2 = w * w;
            let hpp = 2.0 * self.net_demand_conj(i, x) / (w2 * w);
            let (vr, vi) = (s.vr_col(i), s.vi_col(i));
            let jh = Complex64::new(hpp.im, -hpp.re); // -j·h''
            f(vr, vr, dot(hpp) + pv_weight[i]);
            f(vr, vi, dot(jh));
            f(vi, vr, dot(jh));
            f(vi, vi, -dot(hpp) + pv_weight[i]);

            let inv_w2 = w2.inv();
            if let Some(k) = self.q_var[i] {
                let q = s.qg_col(k);
                let d_vr = dot(Complex64::new(inv_w2.im, -inv_w2.re)); // -j/w²
                let d_vi = -dot(inv_w2);
                f(q, vr, d_vr);
                f(vr, q, d_vr);
                f(q, vi, d_vi);
                f(vi, q, d_vi);
            }
            if i == self.slack {
                let p = s.pg_slack_col();
                let d_vr = dot(inv_w2);
                let d_vi = dot(Complex64::new(inv_w2.im, -inv_w2.re));
                f(p, vr, d_vr);
                f(vr, p, d_vr);
                f(p, vi, d_vi);
                f(vi, p, d_vi);
            }
        }
        Ok(())
    }

    pub fn lagrangian_hessian(&self, x: &[f64], lambda: &[f64]) -> Result<CscMatrix> {
        let m = self.system.n_eq();
        let mut t = TripletMatrix::with_capacity(m, m, 12 * self.system.n_bus);
        self.for_each_hessian_entry(x, lambda, |r, c, v| t.push(r, c, v))?;
        t.to_csc()
    }

    /// Complex power injected into the network at every bus, `V · conj(Y V)`.
    pub fn bus_injections(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.system.n_bus)
            .map(|i| {
                let cur: Complex64 = self.y_rows[i]
                    .iter()
                    .map(|&(j, y)| y * self.voltage(j, x))
                    .sum();
                self.voltage(i, x) * cur.conj()
            })
            .collect()
    }
}

#[inline]
fn times_j(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

/// Convenience wrapper compiling `net` on every call.
pub fn residual(net: &Network, x: &StateVector) -> Result<Vec<f64>> {
    EcfModel::new(net)?.residual(x.as_slice())
}

pub fn jacobian(net: &Network, x: &StateVector) -> Result<CscMatrix> {
    EcfModel::new(net)?.jacobian(x.as_slice())
}

pub fn init_state(net: &Network, mode: InitMode) -> Result<StateVector> {
    Ok(EcfModel::new(net)?.init_state(mode))
}

pub fn injection_set(net: &Network) -> Result<InjectionSet> {
    Ok(EcfModel::new(net)?.injection_set().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::two_bus;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_counts() {
        let model = EcfModel::new(&two_bus(0.5, 0.1)).unwrap();
        // KCL for two buses, no PV rows, two slack rows
        assert_eq!(model.n_eq(), 2 * 2 + 2);
        assert_eq!(model.injection_set().buses, vec![1]);
        assert_eq!(model.injection_set().dim(), 2);
    }

    #[test]
    fn flat_start_two_bus() {
        let model = EcfModel::new(&two_bus(0.5, 0.1)).unwrap();
        let x = model.init_state(InitMode::Flat);
        assert_eq!(x.vr(), &[1.0, 1.0]);
        assert_eq!(x.vi(), &[0.0, 0.0]);
        assert_eq!(x.qg(), &[0.0]);
    }

    #[test]
    fn unloaded_flat_state_balances() {
        let model = EcfModel::new(&two_bus(0.0, 0.0)).unwrap();
        let r = model
            .residual(model.init_state(InitMode::Flat).as_slice())
            .unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15), "{r:?}");
    }

    #[test]
    fn collapsed_voltage_rejected() {
        let model = EcfModel::new(&two_bus(0.5, 0.1)).unwrap();
        let mut x = model.init_state(InitMode::Flat).into_vec();
        x[1] = 0.0;
        assert!(matches!(
            model.residual(&x),
            Err(Error::VoltageCollapse { bus: 1, .. })
        ));
    }

    fn fd_jacobian_check(model: &EcfModel, x: &[f64]) -> f64 {
        let jac = model.jacobian(x).unwrap();
        let h = 1e-7;
        let mut worst: f64 = 0.0;
        for c in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let (rp, rm) = (model.residual(&xp).unwrap(), model.residual(&xm).unwrap());
            for r in 0..rp.len() {
                let fd = (rp[r] - rm[r]) / (2.0 * h);
                worst = worst.max((jac.get(r, c) - fd).abs() / (1.0 + fd.abs()));
            }
        }
        worst
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut net = two_bus(0.7, 0.3);
        net.branches[0].tap = 0.97;
        net.branches[0].shift = 0.05;
        net.branches[0].b_charging = 0.04;
        let model = EcfModel::new(&net).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..model.n_eq())
                .map(|i| {
                    if i < 2 {
                        rng.gen_range(0.8..1.2)
                    } else {
                        rng.gen_range(-0.3..0.3)
                    }
                })
                .collect();
            let err = fd_jacobian_check(&model, &x);
            assert!(err < 1e-6, "relative error {err}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_jt_lambda() {
        let model = EcfModel::new(&two_bus(0.7, 0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = model.n_eq();
        let x: Vec<f64> = (0..m)
            .map(|i| {
                if i < 2 {
                    rng.gen_range(0.8..1.2)
                } else {
                    rng.gen_range(-0.3..0.3)
                }
            })
            .collect();
        let lambda: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hess = model.lagrangian_hessian(&x, &lambda).unwrap();
        let h = 1e-6;
        for c in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let gp = model.jacobian(&xp).unwrap().tr_mul_vec(&lambda);
            let gm = model.jacobian(&xm).unwrap().tr_mul_vec(&lambda);
            for r in 0..m {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                assert!(
                    (hess.get(r, c) - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "H[{r},{c}] {} vs {fd}",
                    hess.get(r, c)
                );
            }
        }
    }

    #[test]
    fn jacobian_pattern_is_state_independent() {
        let model = EcfModel::new(&two_bus(0.7, 0.3)).unwrap();
        let a = model
            .jacobian(model.init_state(InitMode::Flat).as_slice())
            .unwrap();
        let mut x = model.init_state(InitMode::Flat).into_vec();
        x[1] = 0.9;
        x[3] = -0.1;
        let b = model.jacobian(&x).unwrap();
        assert_eq!(a.nnz(), b.nnz());
        assert!(a.same_pattern(&b));
    }

    #[test]
    fn untapped_branch_stamp_is_symmetric() {
        let model = EcfModel::new(&two_bus(0.0, 0.0)).unwrap();
        let y01 = model.admittance_row(0).iter().find(|e| e.0 == 1).unwrap().1;
        let y10 = model.admittance_row(1).iter().find(|e| e.0 == 0).unwrap().1;
        assert_eq!(y01, y10);
    }
}
