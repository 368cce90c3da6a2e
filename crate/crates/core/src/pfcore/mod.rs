//! Newton power flow and least-squares infeasibility quantification.

mod kkt;
mod l2;
mod powerflow;

use serde::{Deserialize, Serialize};

use crate::ecf::StateVector;
use crate::error::{Error, Result};

pub(crate) use kkt::{damping_scale, KktNewton};
pub use l2::{solve_l2, solve_l2_from, solve_l2_with_model};
pub use powerflow::{solve_powerflow, solve_powerflow_with_model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Infinity-norm convergence tolerance on the residual / KKT system.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest voltage-component change per Newton step, in pu.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            damping: 0.5,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.damping > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "damping must be > 0, got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    /// An outer localization loop stopped early; the solution is the last
    /// stage that converged.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    pub status: SolveStatus,
    pub x: StateVector,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Converged (or last) primal-dual point of an infeasibility problem.
///
/// Injection vectors (`i_f`, `t`, `mu_u`, `mu_l`) are indexed by component:
/// `2k` is the real and `2k + 1` the imaginary current at
/// `injection_buses[k]`. The bound quantities are empty for least-squares
/// solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilitySolution {
    pub status: SolveStatus,
    pub x: StateVector,
    pub i_f: Vec<f64>,
    /// One multiplier per equality row.
    pub lambda: Vec<f64>,
    pub t: Vec<f64>,
    pub mu_u: Vec<f64>,
    pub mu_l: Vec<f64>,
    pub injection_buses: Vec<usize>,
    /// `sqrt(re² + im²)` per injection bus.
    pub per_bus_mag: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Barrier parameter of the final stage (zero for least squares).
    pub epsilon: f64,
}

impl InfeasibilitySolution {
    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn max_magnitude(&self) -> f64 {
        self.per_bus_mag.iter().fold(0.0, |m, v| m.max(*v))
    }
}

pub fn per_bus_magnitudes(i_f: &[f64]) -> Vec<f64> {
    i_f.chunks_exact(2).map(|c| c[0].hypot(c[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magnitudes_pair_components() {
        assert_eq!(per_bus_magnitudes(&[3.0, 4.0, 0.0, -1.0]), vec![5.0, 1.0]);
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        assert!(SolverOptions {
            tol: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SolverOptions {
            max_iter: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SolverOptions {
            damping: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
