//! Randomized comparison of the allocators against the brute-force oracles.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdm_opt::{comp_optimal_fdm, decision_optimal_fdm, FdmOptions};
use crate::model::{cscg, ChannelRealization, SolverInstance};
use crate::oracle::{grid_tdm_md, grid_tdm_mse, multistart_primal_fdm, GridSpec, PrimalObjective};
use crate::rng::stream_rng;
use crate::tdm_opt::{comp_optimal_tdm, decision_optimal_tdm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckedSolver {
    CompTdm,
    DecisionTdm,
    CompFdm,
    DecisionFdm,
}

impl CheckedSolver {
    pub const ALL: [CheckedSolver; 4] = [
        CheckedSolver::CompTdm,
        CheckedSolver::DecisionTdm,
        CheckedSolver::CompFdm,
        CheckedSolver::DecisionFdm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedSolver::CompTdm => "comp-tdm",
            CheckedSolver::DecisionTdm => "decision-tdm",
            CheckedSolver::CompFdm => "comp-fdm",
            CheckedSolver::DecisionFdm => "decision-fdm",
        }
    }
}

impl fmt::Display for CheckedSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckedSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckedSolver::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown solver {s:?}")))
    }
}

/// One TDM slot problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmSlot {
    pub h: Vec<Complex64>,
    pub budgets: Vec<f64>,
    /// Root second moments `ν_k`.
    pub nu: Vec<f64>,
    pub signal_var: f64,
    pub delta_sq: f64,
    pub noise_var: f64,
}

impl TdmSlot {
    pub fn delta_prime(&self) -> f64 {
        self.delta_sq / self.signal_var
    }

    pub fn sigma_eq_sq(&self) -> f64 {
        self.noise_var / self.signal_var
    }
}

fn budget<R: Rng + ?Sized>(rng: &mut R, noise_var: f64) -> f64 {
    noise_var * 10f64.powf(rng.random_range(-10.0..30.0) / 10.0)
}

/// Random slot with `K` users: Rayleigh gains, per-user budgets between
/// −10 and 30 dB above the noise, heterogeneous second moments.
pub fn random_tdm_slot<R: Rng + ?Sized>(rng: &mut R, num_users: usize) -> TdmSlot {
    let noise_var: f64 = rng.random_range(0.05..0.5);
    let signal_var: f64 = rng.random_range(0.05..1.0);
    TdmSlot {
        h: (0..num_users).map(|_| cscg(rng)).collect(),
        budgets: (0..num_users).map(|_| budget(rng, noise_var)).collect(),
        nu: (0..num_users)
            .map(|_| (signal_var + rng.random_range(0.0..1.0)).sqrt())
            .collect(),
        signal_var,
        delta_sq: rng.random_range(0.01..1.0),
        noise_var,
    }
}

/// Random FDM instance with `K` users and `M` subcarriers.
pub fn random_fdm_instance<R: Rng + ?Sized>(
    rng: &mut R,
    num_users: usize,
    dims: usize,
) -> SolverInstance {
    let noise_var: f64 = rng.random_range(0.05..0.5);
    let var_per_dim: Vec<f64> = (0..dims).map(|_| rng.random_range(0.05..0.5)).collect();
    let nu: Vec<f64> = var_per_dim
        .iter()
        .map(|v| v + rng.random_range(0.0..1.0))
        .collect();
    let gains = (0..num_users)
        .map(|_| (0..dims).map(|_| cscg(rng)).collect())
        .collect();
    SolverInstance {
        channels: ChannelRealization::new(gains).expect("nonempty"),
        budgets: (0..num_users).map(|_| budget(rng, noise_var)).collect(),
        nu_sq: vec![nu; num_users],
        var_per_dim,
        delta_min_sq: (0..dims).map(|_| rng.random_range(0.01..1.0)).collect(),
        noise_var,
    }
}

/// Instance that failed or disagreed, kept for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AuditInstance {
    Tdm(TdmSlot),
    Fdm(SolverInstance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub instance: usize,
    pub num_users: usize,
    pub dims: usize,
    pub solver_objective: f64,
    pub oracle_objective: f64,
    /// `|solver − oracle| / |oracle|`.
    pub rel_diff: f64,
    /// Allowed absolute disagreement.
    pub tolerance: f64,
    pub cell_bound: Option<f64>,
    pub duality_gap: Option<f64>,
    /// Largest `|λ_k (power_k − P_k)| / P_k`.
    pub cs_residual: Option<f64>,
    /// Solver worse than the oracle (beyond rounding).
    pub dominated: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub solver: CheckedSolver,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    pub rows: Vec<AuditRow>,
}

/// Acceptance thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditTolerances {
    pub rel_objective: f64,
    pub duality_gap: f64,
    pub cs_residual: f64,
    /// Relative slack before a solver counts as beaten by the oracle.
    pub dominance: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        AuditTolerances {
            rel_objective: 1e-3,
            duality_gap: 1e-2,
            cs_residual: 1e-4,
            dominance: 1e-9,
        }
    }
}

/// Multistart count used for the FDM oracle.
pub const ORACLE_STARTS: usize = 20;

fn check_tdm(
    solver: CheckedSolver,
    i: usize,
    slot: &TdmSlot,
    tol: &AuditTolerances,
) -> Result<AuditRow> {
    let spec = GridSpec::default();
    let (sol, oracle, cell, minimize) = match solver {
        CheckedSolver::CompTdm => {
            let s = comp_optimal_tdm(
                &slot.h,
                &slot.budgets,
                &slot.nu,
                slot.signal_var,
                slot.noise_var,
            )?;
            let o = grid_tdm_mse(
                &slot.h,
                &slot.budgets,
                &slot.nu,
                slot.signal_var,
                slot.noise_var,
                spec,
            );
            (s.objective, o.objective, o.cell_bound, true)
        }
        _ => {
            let s = decision_optimal_tdm(
                &slot.h,
                &slot.budgets,
                &slot.nu,
                slot.delta_prime(),
                slot.sigma_eq_sq(),
            )?;
            let o = grid_tdm_md(
                &slot.h,
                &slot.budgets,
                &slot.nu,
                slot.delta_prime(),
                slot.sigma_eq_sq(),
                spec,
            );
            (s.objective, o.objective, o.cell_bound, false)
        }
    };
    let tolerance = (tol.rel_objective * oracle.abs()).max(cell);
    let slack = tol.dominance * oracle.abs();
    let dominated = if minimize {
        sol > oracle + slack
    } else {
        sol < oracle - slack
    };
    Ok(AuditRow {
        instance: i,
        num_users: slot.h.len(),
        dims: 1,
        solver_objective: sol,
        oracle_objective: oracle,
        rel_diff: (sol - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE),
        tolerance,
        cell_bound: Some(cell),
        duality_gap: None,
        cs_residual: None,
        dominated,
        pass: !dominated && (sol - oracle).abs() <= tolerance,
    })
}

fn check_fdm(
    solver: CheckedSolver,
    i: usize,
    inst: &SolverInstance,
    seed: u64,
    opts: &FdmOptions,
    tol: &AuditTolerances,
) -> Result<AuditRow> {
    let (sol, objective) = match solver {
        CheckedSolver::CompFdm => (comp_optimal_fdm(inst, opts)?, PrimalObjective::Mse),
        _ => (decision_optimal_fdm(inst, opts)?, PrimalObjective::Md),
    };
    let oracle = multistart_primal_fdm(inst, objective, ORACLE_STARTS, seed).objective;
    let cs = sol
        .dual_state
        .cs_residual
        .iter()
        .zip(&inst.budgets)
        .map(|(r, p)| r / p)
        .fold(0.0, f64::max);
    let rel_diff = (sol.objective - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);
    let feasible = sol.alloc.is_power_feasible(&inst.budgets, &inst.nu_sq);
    let pass = feasible
        && rel_diff <= tol.rel_objective
        && sol.duality_gap <= tol.duality_gap
        && cs <= tol.cs_residual;
    Ok(AuditRow {
        instance: i,
        num_users: inst.num_users(),
        dims: inst.feature_dim(),
        solver_objective: sol.objective,
        oracle_objective: oracle,
        rel_diff,
        tolerance: tol.rel_objective * oracle.abs(),
        cell_bound: None,
        duality_gap: Some(sol.duality_gap),
        cs_residual: Some(cs),
        dominated: match objective {
            PrimalObjective::Mse => sol.objective > oracle * (1.0 + tol.rel_objective),
            PrimalObjective::Md => sol.objective < oracle * (1.0 - tol.rel_objective),
        },
        pass,
    })
}

/// The `index`-th random instance of an audit: TDM slots with `K ∈ 1..=4`,
/// FDM instances with `K ∈ 1..=3` and `M ∈ 1..=4`.
pub fn audit_instance(solver: CheckedSolver, seed: u64, index: usize) -> AuditInstance {
    let mut rng = stream_rng(seed, index as u64);
    match solver {
        CheckedSolver::CompTdm | CheckedSolver::DecisionTdm => {
            let k = rng.random_range(1..=4);
            AuditInstance::Tdm(random_tdm_slot(&mut rng, k))
        }
        _ => {
            let k = rng.random_range(1..=3);
            let m = rng.random_range(1..=4);
            AuditInstance::Fdm(random_fdm_instance(&mut rng, k, m))
        }
    }
}

/// Runs `instances` random comparisons. Instances that fail, or whose
/// objectives differ by more than 1 %, are written to `dump_dir` as JSON.
pub fn run_audit(
    solver: CheckedSolver,
    instances: usize,
    seed: u64,
    opts: &FdmOptions,
    tol: &AuditTolerances,
    dump_dir: Option<&Path>,
) -> Result<AuditReport> {
    let rows = (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = audit_instance(solver, seed, i);
            let row = match &inst {
                AuditInstance::Tdm(slot) => check_tdm(solver, i, slot, tol)?,
                AuditInstance::Fdm(fdm) => check_fdm(solver, i, fdm, seed ^ i as u64, opts, tol)?,
            };
            if let Some(dir) = dump_dir {
                if !row.pass || row.rel_diff > 1e-2 {
                    let path = dir.join(format!("{}-{}-{i}.json", solver.name(), seed));
                    let doc = serde_json::json!({ "solver": solver, "instance": inst, "row": row });
                    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)
                        .map_err(|e| Error::io(&path, e))?;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<AuditRow>>>()?;
    let passed = rows.iter().filter(|r| r.pass).count();
    Ok(AuditReport {
        solver,
        seed,
        passed,
        failed: rows.len() - passed,
        rows,
    })
}
