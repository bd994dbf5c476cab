//! MSE-minimizing FDM allocation.

use num_complex::Complex64;

use super::outer::{floored, minimize, DualPoint, PricedProblem};
use super::{
    dual_state, fill_budgets, rescale_to_budgets, DualSnapshot, FdmOptions, FdmSolution,
    SubcarrierDiag,
};
use crate::aircomp::{mse_total, Allocation};
use crate::error::{Error, Result};
use crate::model::{Multiplexing, SolverInstance};
use crate::roots::{decreasing_root, ScalarRoot, ROOT_REL_TOL};

/// Transmit coefficient minimizing the per-subcarrier Lagrangian for a fixed
/// receive coefficient: magnitude `σ²|a h| / (σ²|a|²|h|² + λ ν²)`, phase
/// conjugate to `a h`.
pub fn inner_b_comp(
    lambda: f64,
    receive: Complex64,
    h: Complex64,
    signal_var: f64,
    nu_sq: f64,
) -> Complex64 {
    let ah = receive * h;
    let den = signal_var * ah.norm_sqr() + lambda * nu_sq;
    if ah.norm() == 0.0 || den <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(signal_var * ah.norm() / den, -ah.arg())
}

fn rn_lhs(r: f64, lambda: &[f64], h: &[Complex64], nu_sq: &[f64], signal_var: f64) -> f64 {
    let s2 = signal_var * signal_var;
    lambda
        .iter()
        .zip(h)
        .zip(nu_sq)
        .filter(|((l, _), _)| **l > 0.0)
        .map(|((l, h), nu2)| {
            let h2 = h.norm_sqr();
            let den = signal_var * r * h2 + l * nu2;
            l * nu2 * s2 * h2 / (den * den)
        })
        .sum()
}

/// Optimal squared receive gain `r_n*` on one subcarrier: the root of
/// `Σ_k λ_k ν² σ⁴ |h|² / (σ² r |h|² + λ_k ν²)² = σ_w²`.
///
/// The left side decreases strictly in `r`; when it already sits at or below
/// `σ_w²` at `r = 0`, the optimum is the boundary `r* = 0`.
pub fn solve_rn(
    lambda: &[f64],
    h: &[Complex64],
    nu_sq: &[f64],
    signal_var: f64,
    noise_var: f64,
) -> Result<ScalarRoot> {
    if lambda.len() != h.len() || lambda.len() != nu_sq.len() {
        return Err(Error::DimensionMismatch(
            "solve_rn input lengths differ".into(),
        ));
    }
    if lambda.iter().all(|&l| l <= 0.0) {
        return Err(Error::UnboundedReceiveGain);
    }
    let at_zero = rn_lhs(0.0, lambda, h, nu_sq, signal_var);
    if at_zero <= noise_var {
        return Ok(ScalarRoot::at_zero());
    }
    Ok(decreasing_root(
        |r| rn_lhs(r, lambda, h, nu_sq, signal_var) - noise_var,
        ROOT_REL_TOL,
    ))
}

struct Subcarrier {
    root: ScalarRoot,
    receive: f64,
    transmit: Vec<Complex64>,
    /// `min_a Φ_n` at the given prices.
    phi: f64,
}

fn solve_subcarrier(inst: &SolverInstance, lambda: &[f64], n: usize) -> Subcarrier {
    let h = inst.channels.column(n);
    let nu: Vec<f64> = inst.nu_sq.iter().map(|row| row[n]).collect();
    let var = inst.var_per_dim[n];
    let root =
        solve_rn(lambda, &h, &nu, var, inst.noise_var).expect("prices are floored above zero");
    let r = root.value;
    let a = r.sqrt();
    let transmit: Vec<Complex64> = (0..h.len())
        .map(|k| inner_b_comp(lambda[k], Complex64::new(a, 0.0), h[k], var, nu[k]))
        .collect();
    let phi = (0..h.len())
        .map(|k| {
            let d = var * r * h[k].norm_sqr() + lambda[k] * nu[k];
            if d > 0.0 {
                lambda[k] * nu[k] * var / d
            } else {
                var
            }
        })
        .sum::<f64>()
        + r * inst.noise_var;
    Subcarrier {
        root,
        receive: a,
        transmit,
        phi,
    }
}

struct CompProblem<'a> {
    inst: &'a SolverInstance,
}

impl CompProblem<'_> {
    fn solve_all(&self, lambda: &[f64]) -> (Vec<Subcarrier>, f64, Vec<f64>) {
        let inst = self.inst;
        let subs: Vec<Subcarrier> = (0..inst.feature_dim())
            .map(|n| solve_subcarrier(inst, lambda, n))
            .collect();
        let mut power = vec![0.0; inst.num_users()];
        for (n, sub) in subs.iter().enumerate() {
            for (k, b) in sub.transmit.iter().enumerate() {
                power[k] += inst.nu_sq[k][n] * b.norm_sqr();
            }
        }
        let dual = subs.iter().map(|s| s.phi).sum::<f64>()
            - lambda
                .iter()
                .zip(&inst.budgets)
                .map(|(l, p)| l * p)
                .sum::<f64>();
        (subs, dual, power)
    }

    fn recover(&self, lambda: &[f64]) -> (Allocation, Vec<SubcarrierDiag>, f64, Vec<f64>) {
        let inst = self.inst;
        let (subs, dual, power) = self.solve_all(lambda);
        let mut alloc = Allocation::zeros(inst.num_users(), inst.feature_dim(), Multiplexing::Fdm);
        let mut diags = Vec::with_capacity(subs.len());
        for (n, sub) in subs.into_iter().enumerate() {
            alloc.receive[n] = Complex64::new(sub.receive, 0.0);
            for (k, b) in sub.transmit.into_iter().enumerate() {
                alloc.transmit[k][n] = b;
            }
            diags.push(SubcarrierDiag {
                root: sub.root.value,
                boundary: sub.root.boundary,
                fixed_point_residual: None,
            });
        }
        rescale_to_budgets(&mut alloc, &inst.budgets, &inst.nu_sq);
        fill_budgets(&mut alloc, inst, |a| {
            -mse_total(a, &inst.channels, &inst.var_per_dim, inst.noise_var)
                .unwrap_or(f64::INFINITY)
        });
        (alloc, diags, dual, power)
    }
}

impl PricedProblem for CompProblem<'_> {
    fn budgets(&self) -> &[f64] {
        &self.inst.budgets
    }

    fn price_bound(&self) -> Vec<f64> {
        // g(λ*) ≥ g(0) = 0 and g(λ) ≤ K Σ_n σ_n² − Σ_k λ_k P_k
        let k = self.inst.num_users() as f64;
        let total: f64 = self.inst.var_per_dim.iter().sum::<f64>() * k;
        self.inst.budgets.iter().map(|p| total / p).collect()
    }

    fn initial_prices(&self) -> Vec<f64> {
        self.inst
            .budgets
            .iter()
            .map(|p| self.inst.noise_var / p)
            .collect()
    }

    fn evaluate(&self, lambda: &[f64]) -> DualPoint {
        let (_, dual, power) = self.solve_all(lambda);
        DualPoint { f: -dual, power }
    }
}

/// MSE-minimizing FDM allocation by dual decomposition.
pub fn comp_optimal_fdm(inst: &SolverInstance, opts: &FdmOptions) -> Result<FdmSolution> {
    inst.validate()?;
    let problem = CompProblem { inst };
    let outer = minimize(&problem, opts, -1.0);
    let (alloc, subcarriers, dual, _) = problem.recover(&outer.lambda);
    let objective = mse_total(&alloc, &inst.channels, &inst.var_per_dim, inst.noise_var)?;
    let duality_gap = if objective > 0.0 {
        (objective - dual).abs() / objective
    } else {
        0.0
    };
    let dual_state = dual_state(
        outer.lambda,
        &alloc,
        &inst.budgets,
        &inst.nu_sq,
        dual,
        outer.iterations,
        outer.converged,
    );
    Ok(FdmSolution {
        alloc,
        dual_state,
        objective,
        duality_gap,
        subcarriers,
        trace: outer.trace,
    })
}

/// Dual value and recovered-primal MSE at arbitrary prices.
pub fn comp_dual_snapshot(inst: &SolverInstance, lambda: &[f64]) -> Result<DualSnapshot> {
    inst.validate()?;
    if lambda.len() != inst.num_users() || lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidArgument(
            "prices must be nonnegative, one per user".into(),
        ));
    }
    let problem = CompProblem { inst };
    let lambda = floored(lambda, &problem.price_bound());
    let (alloc, _, dual, power_used) = problem.recover(&lambda);
    Ok(DualSnapshot {
        dual_value: dual,
        primal_objective: mse_total(&alloc, &inst.channels, &inst.var_per_dim, inst.noise_var)?,
        power_used,
    })
}
