use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use infeasloc::localizer::SparsityConfig;
use infeasloc::netmodel::ScalingMode;
use infeasloc::pfcore::SolverOptions;
use infeasloc_cli::{error_exit_code, exit_code, render, run, Format, Method, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scaling {
    LoadsOnly,
    LoadsAndGeneration,
}

/// Localize power-flow infeasibility to a sparse set of buses.
#[derive(Debug, Parser)]
#[command(name = "infeasloc", version)]
struct Args {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    /// Loading factor.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// What the loading factor multiplies.
    #[arg(long, value_enum, default_value = "loads-and-generation")]
    scaling: Scaling,
    #[arg(long, value_enum, default_value = "auto")]
    method: Method,
    /// Sparsity goal for `buswise`, or target support for a calibrated `l1`.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Uniform enforcer for `l1`; calibrated to `--k` buses if omitted.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = SparsityConfig::default().c_high)]
    c_high: f64,
    #[arg(long, default_value_t = SparsityConfig::default().c_low)]
    c_low: f64,
    /// Shrinkage rate of the sparsity goal.
    #[arg(long, default_value_t = SparsityConfig::default().rate)]
    rate: f64,
    /// Per-bus magnitude above which a bus counts as infeasible.
    #[arg(long, default_value_t = SparsityConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = SolverOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = SolverOptions::default().max_iter)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall time in the report (breaks byte-identical output).
    #[arg(long)]
    timing: bool,
}

impl From<Args> for RunConfig {
    fn from(a: Args) -> Self {
        let mut cfg = RunConfig::new(a.case);
        cfg.alpha = a.alpha;
        cfg.scaling = match a.scaling {
            Scaling::LoadsOnly => ScalingMode::LoadsOnly,
            Scaling::LoadsAndGeneration => ScalingMode::LoadsAndGeneration,
        };
        cfg.method = a.method;
        cfg.k = a.k;
        cfg.c = a.c;
        cfg.sparsity.c_high = a.c_high;
        cfg.sparsity.c_low = a.c_low;
        cfg.sparsity.rate = a.rate;
        cfg.sparsity.tau = a.tau;
        cfg.solver.tol = a.tol;
        cfg.solver.max_iter = a.max_iter;
        cfg.format = a.format;
        cfg.output_path = a.out;
        cfg.timing = a.timing;
        cfg
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // argument errors are input errors (1); clap would use 2, which means divergence here
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cfg = RunConfig::from(args);
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("infeasloc: {e}");
            return ExitCode::from(error_exit_code(&e) as u8);
        }
    };
    let bytes = render(&report, cfg.format);
    let written = match &cfg.output_path {
        Some(p) => std::fs::write(p, &bytes).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("infeasloc: cannot write report: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(exit_code(&report) as u8)
}
