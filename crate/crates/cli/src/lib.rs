//! Front end for the `infeasloc` binary: one solve per invocation, rendered
//! as JSON, CSV or a ranked text table.

mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use infeasloc::ecf::{EcfModel, InitMode};
use infeasloc::localizer::{
    calibrate_uniform_c, localize, localize_k_sparse, solve_sparse, sparsity_count, verify_kkt,
    EnforcerVector, SparsityConfig,
};
use infeasloc::netmodel::{parse_matpower, scale_loading_with, ScalingMode};
use infeasloc::pfcore::{
    solve_l2_with_model, solve_powerflow_with_model, SolveStatus, SolverOptions,
};
use infeasloc::Error;
use serde::{Deserialize, Serialize};

pub use report::{render, BusRow, KktSummary, SolveReport, TraceRow, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain Newton power flow.
    Pf,
    /// Minimum-norm infeasibility currents.
    L2,
    /// Uniform L1 enforcer.
    L1,
    /// Bus-wise enforcers with a fixed sparsity goal.
    Buswise,
    /// Shrinking sparsity goal from the least-squares start.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub alpha: f64,
    pub scaling: ScalingMode,
    pub method: Method,
    pub k: usize,
    /// Uniform enforcer for [`Method::L1`]; calibrated to `k` buses when absent.
    pub c: Option<f64>,
    pub sparsity: SparsityConfig,
    pub solver: SolverOptions,
    pub format: Format,
    pub output_path: Option<PathBuf>,
    pub timing: bool,
}

impl RunConfig {
    pub fn new(case_path: impl Into<PathBuf>) -> Self {
        Self {
            case_path: case_path.into(),
            alpha: 1.0,
            scaling: ScalingMode::default(),
            method: Method::Auto,
            k: 1,
            c: None,
            sparsity: SparsityConfig::default(),
            solver: SolverOptions::default(),
            format: Format::Json,
            output_path: None,
            timing: false,
        }
    }

    pub fn validate(&self) -> infeasloc::Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if let Some(c) = self.c {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "c must be finite and >= 0, got {c}"
                )));
            }
        }
        self.sparsity.validate()?;
        self.solver.validate()
    }
}

/// Process exit code for a finished report.
pub fn exit_code(report: &SolveReport) -> i32 {
    match report.status {
        SolveStatus::Converged => 0,
        SolveStatus::Diverged | SolveStatus::Partial => 2,
    }
}

/// Exit code for an error that prevented a report.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged(_) | Error::SingularMatrix { .. } | Error::VoltageCollapse { .. } => 2,
        _ => 1,
    }
}

pub fn run(cfg: &RunConfig) -> infeasloc::Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let text = std::fs::read_to_string(&cfg.case_path)?;
    let base = parse_matpower(&text)?;
    let net = scale_loading_with(&base, cfg.alpha, cfg.scaling)?;
    let model = EcfModel::new(&net)?;
    let (sc, opts) = (&cfg.sparsity, &cfg.solver);
    let mut report = SolveReport::new(cfg, case_name(&cfg.case_path, &net.name), net.n_bus());

    match cfg.method {
        Method::Pf => {
            let pf = solve_powerflow_with_model(&model, &model.init_state(InitMode::Flat), opts)?;
            report.status = pf.status;
            report.iterations = pf.iterations;
            report.kkt = KktSummary::residual_only(pf.residual_norm);
        }
        Method::L2 => {
            let sol = solve_l2_with_model(&model, opts)?;
            report.fill(&model, &sol, None, sc.tau);
        }
        Method::L1 => {
            let l2 = converged_l2(&model, opts)?;
            let n_inj = model.injection_set().len();
            let (sol, c) = match cfg.c {
                Some(c) => {
                    let c = EnforcerVector::uniform(n_inj, c)?;
                    (solve_sparse(&model, &c, &l2, sc, opts)?, c)
                }
                None => {
                    let cal = calibrate_uniform_c(&model, &l2, cfg.k, sc, opts)?;
                    (cal.solution, EnforcerVector::uniform(n_inj, cal.c)?)
                }
            };
            report.fill(&model, &sol, Some(&c), sc.tau);
            report.kkt =
                KktSummary::from_report(&verify_kkt(&model, &sol, &c, sol.epsilon, sc.tau)?);
        }
        Method::Buswise => {
            let l2 = converged_l2(&model, opts)?;
            let (sol, c) = localize_k_sparse(&model, &l2, cfg.k, sc, opts)?;
            report.fill(&model, &sol, Some(&c), sc.tau);
            report.kkt =
                KktSummary::from_report(&verify_kkt(&model, &sol, &c, sol.epsilon, sc.tau)?);
        }
        Method::Auto => {
            let out = localize(&model, sc, opts)?;
            report.fill(&model, &out.solution, Some(&out.enforcers), sc.tau);
            if out.solution.epsilon > 0.0 {
                let kkt = verify_kkt(
                    &model,
                    &out.solution,
                    &out.enforcers,
                    out.solution.epsilon,
                    sc.tau,
                )?;
                report.kkt = KktSummary::from_report(&kkt);
            }
            report.trace = out.trace.iter().map(TraceRow::from).collect();
            debug_assert_eq!(report.sparsity_count, sparsity_count(&out.solution, sc.tau));
        }
    }
    if cfg.timing {
        report.wall_time_s = Some(format!("{:.3}", start.elapsed().as_secs_f64()));
    }
    Ok(report)
}

fn converged_l2(
    model: &EcfModel,
    opts: &SolverOptions,
) -> infeasloc::Result<infeasloc::pfcore::InfeasibilitySolution> {
    let l2 = solve_l2_with_model(model, opts)?;
    if !l2.is_converged() {
        return Err(Error::Diverged(format!(
            "least-squares warm start stopped after {} iterations at residual {:.3e}",
            l2.iterations, l2.kkt_residual
        )));
    }
    Ok(l2)
}

fn case_name(path: &Path, parsed: &str) -> String {
    if !parsed.is_empty() {
        return parsed.to_string();
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
