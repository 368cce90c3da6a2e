//! Solve reports and their renderings.
//!
//! JSON schema (`schema_version` 1), snake_case keys. Real numbers that carry
//! results are decimal strings in `{:.12e}` form so they survive any JSON
//! reader unchanged:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "method": "auto", "case": "case14", "n_bus": 14, "alpha": "4.5…e0",
//!   "scaling": "loads_and_generation", "status": "converged", "sparsity_count": 1,
//!   "objective": "…", "iterations": 42,
//!   "kkt": {"residual": "…", "threshold_gap": "…" | null, ...},
//!   "buses": [{"bus_id": 14, "i_re": "…", "i_im": "…", "magnitude": "…",
//!              "c": "…" | null, "dominant": true}],
//!   "trace": [{"k_goal": 11, "k_actual": 6, "objective": "…",
//!              "iterations": 12, "status": "converged"}],
//!   "wall_time_s": "0.123"            // only with --timing
//! }
//! ```

use std::fmt::Write as _;

use infeasloc::ecf::EcfModel;
use infeasloc::localizer::{sparsity_count, EnforcerVector, KktReport, OuterIteration};
use infeasloc::netmodel::{BusId, ScalingMode};
use infeasloc::pfcore::{InfeasibilitySolution, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::{Format, Method, RunConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRow {
    pub bus_id: BusId,
    pub i_re: String,
    pub i_im: String,
    pub magnitude: String,
    /// Enforcer of the bus; absent for least squares.
    pub c: Option<String>,
    pub dominant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSummary {
    /// Solver's final residual norm.
    pub residual: String,
    pub stationarity: Option<String>,
    pub complementarity: Option<String>,
    pub primal_feas: Option<String>,
    pub threshold_gap: Option<String>,
    pub blocked_excess: Option<String>,
    pub epsilon: Option<String>,
}

impl KktSummary {
    pub fn residual_only(r: f64) -> Self {
        Self {
            residual: num(r),
            stationarity: None,
            complementarity: None,
            primal_feas: None,
            threshold_gap: None,
            blocked_excess: None,
            epsilon: None,
        }
    }

    pub fn from_report(k: &KktReport) -> Self {
        Self {
            residual: num(k.max_residual()),
            stationarity: Some(num(k
                .stationarity_x
                .max(k.stationarity_if)
                .max(k.dual_feas))),
            complementarity: Some(num(k.comp_upper.max(k.comp_lower))),
            primal_feas: Some(num(k.primal_feas)),
            threshold_gap: Some(num(k.threshold_gap)),
            blocked_excess: Some(num(k.blocked_excess)),
            epsilon: Some(num(k.epsilon)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k_goal: usize,
    pub k_actual: usize,
    pub objective: String,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl From<&OuterIteration> for TraceRow {
    fn from(it: &OuterIteration) -> Self {
        Self {
            k_goal: it.k_goal,
            k_actual: it.k_actual,
            objective: num(it.objective),
            iterations: it.iterations,
            status: it.status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub method: Method,
    pub case: String,
    pub n_bus: usize,
    pub alpha: String,
    pub scaling: ScalingMode,
    pub status: SolveStatus,
    pub sparsity_count: usize,
    pub objective: String,
    pub iterations: usize,
    pub kkt: KktSummary,
    /// Injection buses, descending by magnitude; ties by bus id.
    pub buses: Vec<BusRow>,
    pub trace: Vec<TraceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<String>,
}

impl SolveReport {
    pub(crate) fn new(cfg: &RunConfig, case: String, n_bus: usize) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: cfg.method,
            case,
            n_bus,
            alpha: num(cfg.alpha),
            scaling: cfg.scaling,
            status: SolveStatus::Diverged,
            sparsity_count: 0,
            objective: num(0.0),
            iterations: 0,
            kkt: KktSummary::residual_only(f64::NAN),
            buses: Vec::new(),
            trace: Vec::new(),
            wall_time_s: None,
        }
    }

    pub(crate) fn fill(
        &mut self,
        model: &EcfModel,
        sol: &InfeasibilitySolution,
        c: Option<&EnforcerVector>,
        tau: f64,
    ) {
        let ids = model.bus_ids();
        let mut order: Vec<usize> = (0..sol.per_bus_mag.len()).collect();
        order.sort_by(|&a, &b| {
            sol.per_bus_mag[b]
                .total_cmp(&sol.per_bus_mag[a])
                .then(ids[sol.injection_buses[a]].cmp(&ids[sol.injection_buses[b]]))
        });
        self.buses = order
            .into_iter()
            .map(|k| BusRow {
                bus_id: ids[sol.injection_buses[k]],
                i_re: num(sol.i_f[2 * k]),
                i_im: num(sol.i_f[2 * k + 1]),
                magnitude: num(sol.per_bus_mag[k]),
                c: c.map(|c| num(c.c[k])),
                dominant: sol.per_bus_mag[k] > tau,
            })
            .collect();
        self.status = sol.status;
        self.sparsity_count = sparsity_count(sol, tau);
        self.objective = num(sol.objective);
        self.iterations = sol.iterations;
        self.kkt = KktSummary::residual_only(sol.kkt_residual);
    }

    pub fn dominant_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.dominant)
            .map(|b| b.bus_id)
            .collect()
    }
}

/// Serializes `report` in the requested format.
pub fn render(report: &SolveReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out =
                serde_json::to_vec_pretty(report).expect("report serialization is infallible");
            out.push(b'\n');
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["bus_id", "i_re", "i_im", "magnitude", "c", "dominant"])
                .expect("in-memory write");
            for b in &report.buses {
                let id = b.bus_id.to_string();
                let dominant = b.dominant.to_string();
                let c = b.c.as_deref().unwrap_or("");
                w.write_record([id.as_str(), &b.i_re, &b.i_im, &b.magnitude, c, &dominant])
                    .expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
        Format::Text => render_text(report).into_bytes(),
    }
}

fn short(s: &str) -> String {
    s.parse::<f64>()
        .map(|v| format!("{v:.8}"))
        .unwrap_or_else(|_| s.to_string())
}

fn render_text(r: &SolveReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "case {}  n_bus {}  alpha {}  method {:?}",
        r.case,
        r.n_bus,
        short(&r.alpha),
        r.method
    );
    let _ = writeln!(
        s,
        "status {:?}  sparsity {}  objective {}  iterations {}  kkt {}",
        r.status,
        r.sparsity_count,
        short(&r.objective),
        r.iterations,
        r.kkt.residual
    );
    if !r.trace.is_empty() {
        let _ = writeln!(
            s,
            "\n{:>8} {:>8} {:>16} {:>6}  status",
            "k_goal", "k_actual", "objective", "iters"
        );
        for t in &r.trace {
            let _ = writeln!(
                s,
                "{:>8} {:>8} {:>16} {:>6}  {:?}",
                t.k_goal,
                t.k_actual,
                short(&t.objective),
                t.iterations,
                t.status
            );
        }
    }
    if !r.buses.is_empty() {
        let _ = writeln!(
            s,
            "\n{:>8} {:>12} {:>12} {:>12} {:>8}",
            "bus", "|I|", "I_re", "I_im", "c"
        );
        for b in r.buses.iter().filter(|b| b.dominant) {
            let c = b.c.as_deref().map(short).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:>8} {:>12} {:>12} {:>12} {:>8}",
                b.bus_id,
                short(&b.magnitude),
                short(&b.i_re),
                short(&b.i_im),
                c
            );
        }
        let rest = r.buses.len() - r.sparsity_count;
        if rest > 0 {
            let _ = writeln!(s, "({rest} buses below threshold)");
        }
    }
    if let Some(t) = &r.wall_time_s {
        let _ = writeln!(s, "\nwall time {t} s");
    }
    s
}
