//! Dual-decomposition solvers for the FDM problems.
//!
//! Pricing each user's power budget with `λ_k` decouples the subcarriers.
//! For fixed prices every subcarrier reduces to one monotone scalar equation
//! (the squared receive gain `r_n` for the MSE problem, the consistency
//! variable `z_n` for the MD problem) solved by bisection, after which the
//! transmit amplitudes follow in closed form. An outer loop drives the prices
//! to the dual optimum; the primal is recovered at the best prices and scaled
//! back onto the budgets if needed.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aircomp::{set_mmse_receive, Allocation};
use crate::error::{Error, Result};
use crate::model::SolverInstance;

mod comp;
mod decision;
mod outer;

pub use comp::{comp_dual_snapshot, comp_optimal_fdm, inner_b_comp, solve_rn};
pub use decision::{
    decision_dual_snapshot, decision_optimal_fdm, inner_b_decision, solve_zn, ZnSolution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterMethod {
    /// Central-cut ellipsoid on the price vector with a certified stopping rule.
    Ellipsoid,
    /// Projected subgradient with step `step0 / √t` in normalized price units.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdmOptions {
    pub outer: OuterMethod,
    pub max_iter: usize,
    /// Relative tolerance on the dual optimality certificate (ellipsoid) or on
    /// power violation and step length (subgradient).
    pub tol: f64,
    pub step0: f64,
    pub trace: bool,
}

impl Default for FdmOptions {
    fn default() -> Self {
        FdmOptions {
            outer: OuterMethod::Ellipsoid,
            max_iter: 5000,
            tol: 1e-10,
            step0: 1.0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// Power used by the returned primal.
    pub power_used: Vec<f64>,
    /// `P_k − power_used_k`.
    pub power_slack: Vec<f64>,
    /// Dual function at `lambda`.
    pub dual_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|λ_k (power_used_k − P_k)|`.
    pub cs_residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierDiag {
    /// `r_n*` for the MSE problem, `z_n*` for the MD problem.
    pub root: f64,
    pub boundary: bool,
    /// Relative mismatch between `z_n*` and its defining ratio (MD problem only).
    pub fixed_point_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub dual_value: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdmSolution {
    pub alloc: Allocation,
    pub dual_state: DualState,
    /// Total MSE or total MD of `alloc`.
    pub objective: f64,
    /// `|primal − dual| / |primal|`.
    pub duality_gap: f64,
    pub subcarriers: Vec<SubcarrierDiag>,
    pub trace: Vec<TraceRow>,
}

/// Dual value and recovered primal at one price vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSnapshot {
    pub dual_value: f64,
    /// Objective of the feasible primal recovered at these prices.
    pub primal_objective: f64,
    /// Power drawn by the unscaled inner solution.
    pub power_used: Vec<f64>,
}

/// Writes a convergence trace as `iteration,dual_value,max_violation`.
pub fn write_trace_csv(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::from("iteration,dual_value,max_violation\n");
    for row in trace {
        body.push_str(&format!(
            "{},{:e},{:e}\n",
            row.iteration, row.dual_value, row.max_violation
        ));
    }
    file.write_all(body.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Scales every over-budget user's row onto its budget.
pub(crate) fn rescale_to_budgets(alloc: &mut Allocation, budgets: &[f64], nu_sq: &[Vec<f64>]) {
    for (k, &p) in budgets.iter().enumerate() {
        let used = alloc.power_used(k, nu_sq);
        if used > p {
            let s = (p / used).sqrt();
            for b in alloc.transmit[k].iter_mut() {
                *b *= s;
            }
        }
    }
}

/// Raises every user that leaves budget unused onto its budget, keeping the
/// change only when `score` (larger is better) improves. Receive
/// coefficients are reset to their MMSE values.
pub(crate) fn fill_budgets(
    alloc: &mut Allocation,
    inst: &SolverInstance,
    score: impl Fn(&Allocation) -> f64,
) {
    let mmse =
        |a: &mut Allocation| set_mmse_receive(a, &inst.channels, &inst.var_per_dim, inst.noise_var);
    mmse(alloc);
    let mut current = score(alloc);
    for (k, &p) in inst.budgets.iter().enumerate() {
        let used = alloc.power_used(k, &inst.nu_sq);
        if used <= 0.0 || used >= p {
            continue;
        }
        let mut trial = alloc.clone();
        let s = (p / used).sqrt();
        trial.transmit[k].iter_mut().for_each(|b| *b *= s);
        mmse(&mut trial);
        let value = score(&trial);
        if value > current {
            *alloc = trial;
            current = value;
        }
    }
}

pub(crate) fn dual_state(
    lambda: Vec<f64>,
    alloc: &Allocation,
    budgets: &[f64],
    nu_sq: &[Vec<f64>],
    dual_value: f64,
    iterations: usize,
    converged: bool,
) -> DualState {
    let power_used = alloc.power_profile(nu_sq);
    let power_slack: Vec<f64> = budgets
        .iter()
        .zip(&power_used)
        .map(|(p, u)| p - u)
        .collect();
    let cs_residual = lambda
        .iter()
        .zip(&power_slack)
        .map(|(l, s)| (l * s).abs())
        .collect();
    DualState {
        lambda,
        power_used,
        power_slack,
        dual_value,
        iterations,
        converged,
        cs_residual,
    }
}
