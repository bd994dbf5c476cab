//! MD-maximizing FDM allocation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::outer::{floored, minimize, DualPoint, PricedProblem};
use super::{
    dual_state, fill_budgets, rescale_to_budgets, DualSnapshot, FdmOptions, FdmSolution,
    SubcarrierDiag,
};
use crate::aircomp::{md_total, Allocation};
use crate::error::{Error, Result};
use crate::model::{Multiplexing, SolverInstance};
use crate::roots::{decreasing_root, ScalarRoot, ROOT_REL_TOL};

/// Transmit amplitude `Δ² |h| z / (λ ν² + Δ² σ² |h|² z²)` maximizing the
/// per-subcarrier Lagrangian at a given consistency value `z`.
pub fn inner_b_decision(
    lambda: f64,
    h: Complex64,
    nu_sq: f64,
    delta_sq: f64,
    signal_var: f64,
    z: f64,
) -> f64 {
    let g = h.norm();
    let den = lambda * nu_sq + delta_sq * signal_var * g * g * z * z;
    if den <= 0.0 {
        return 0.0;
    }
    delta_sq * g * z / den
}

fn zn_lhs(
    z: f64,
    lambda: &[f64],
    h: &[Complex64],
    nu_sq: &[f64],
    delta_sq: f64,
    signal_var: f64,
) -> f64 {
    lambda
        .iter()
        .zip(h)
        .zip(nu_sq)
        .filter(|((l, _), _)| **l > 0.0)
        .map(|((l, h), nu2)| {
            let h2 = h.norm_sqr();
            let den = l * nu2 + delta_sq * signal_var * h2 * z * z;
            l * h2 * nu2 / (den * den)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZnSolution {
    pub root: ScalarRoot,
    /// `|z_fp − z*| / z*` where `z_fp = Σ|h b| / (σ² Σ|h b|² + σ_w²)` is
    /// evaluated at the amplitudes implied by `z*`; zero on the boundary.
    pub fixed_point_residual: f64,
}

/// Consistency value `z_n*` on one subcarrier: the root of
/// `Σ_k λ_k |h|² ν² / (λ_k ν² + Δ² σ² |h|² z²)² = σ_w² / Δ²`.
///
/// When the left side is already at or below the right side at `z = 0`
/// (including `Δ² = 0`), the subcarrier is switched off and `z* = 0`.
pub fn solve_zn(
    lambda: &[f64],
    h: &[Complex64],
    nu_sq: &[f64],
    delta_sq: f64,
    signal_var: f64,
    noise_var: f64,
) -> Result<ZnSolution> {
    if lambda.len() != h.len() || lambda.len() != nu_sq.len() {
        return Err(Error::DimensionMismatch(
            "solve_zn input lengths differ".into(),
        ));
    }
    if delta_sq <= 0.0 {
        return Ok(ZnSolution {
            root: ScalarRoot::at_zero(),
            fixed_point_residual: 0.0,
        });
    }
    if lambda.iter().all(|&l| l <= 0.0) {
        return Err(Error::UnboundedReceiveGain);
    }
    let rhs = noise_var / delta_sq;
    if zn_lhs(0.0, lambda, h, nu_sq, delta_sq, signal_var) <= rhs {
        return Ok(ZnSolution {
            root: ScalarRoot::at_zero(),
            fixed_point_residual: 0.0,
        });
    }
    let root = decreasing_root(
        |z| zn_lhs(z, lambda, h, nu_sq, delta_sq, signal_var) - rhs,
        ROOT_REL_TOL,
    );
    let z = root.value;
    let c: Vec<f64> = (0..h.len())
        .map(|k| h[k].norm() * inner_b_decision(lambda[k], h[k], nu_sq[k], delta_sq, signal_var, z))
        .collect();
    let z_fp =
        c.iter().sum::<f64>() / (signal_var * c.iter().map(|x| x * x).sum::<f64>() + noise_var);
    Ok(ZnSolution {
        root,
        fixed_point_residual: (z_fp - z).abs() / z,
    })
}

struct Subcarrier {
    zn: ZnSolution,
    magnitudes: Vec<f64>,
    /// `max_b [G_n(b) − Σ_k λ_k ν² |b_k|²]`.
    psi: f64,
}

fn solve_subcarrier(inst: &SolverInstance, lambda: &[f64], n: usize) -> Subcarrier {
    let h = inst.channels.column(n);
    let nu: Vec<f64> = inst.nu_sq.iter().map(|row| row[n]).collect();
    let (delta, var, noise) = (inst.delta_min_sq[n], inst.var_per_dim[n], inst.noise_var);
    let off = |zn: ZnSolution| Subcarrier {
        zn,
        magnitudes: vec![0.0; h.len()],
        psi: 0.0,
    };
    let zn = solve_zn(lambda, &h, &nu, delta, var, noise).expect("prices are floored above zero");
    if zn.root.boundary {
        return off(zn);
    }
    let z = zn.root.value;
    let magnitudes: Vec<f64> = (0..h.len())
        .map(|k| inner_b_decision(lambda[k], h[k], nu[k], delta, var, z))
        .collect();
    let c: Vec<f64> = magnitudes
        .iter()
        .zip(&h)
        .map(|(m, h)| m * h.norm())
        .collect();
    let s: f64 = c.iter().sum();
    let q: f64 = c.iter().map(|x| x * x).sum();
    let md = delta * s * s / (var * q + noise);
    let penalty: f64 = (0..h.len())
        .map(|k| lambda[k] * nu[k] * magnitudes[k] * magnitudes[k])
        .sum();
    let psi = md - penalty;
    if psi <= 0.0 {
        return off(zn);
    }
    Subcarrier {
        zn,
        magnitudes,
        psi,
    }
}

struct DecisionProblem<'a> {
    inst: &'a SolverInstance,
}

impl DecisionProblem<'_> {
    fn solve_all(&self, lambda: &[f64]) -> (Vec<Subcarrier>, f64, Vec<f64>) {
        let inst = self.inst;
        let subs: Vec<Subcarrier> = (0..inst.feature_dim())
            .map(|n| solve_subcarrier(inst, lambda, n))
            .collect();
        let mut power = vec![0.0; inst.num_users()];
        for (n, sub) in subs.iter().enumerate() {
            for (k, m) in sub.magnitudes.iter().enumerate() {
                power[k] += inst.nu_sq[k][n] * m * m;
            }
        }
        let dual = subs.iter().map(|s| s.psi).sum::<f64>()
            + lambda
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
            for (k, m) in sub.magnitudes.iter().enumerate() {
                let h = inst.channels.gain(k, n);
                alloc.transmit[k][n] = Complex64::from_polar(*m, -h.arg());
            }
            diags.push(SubcarrierDiag {
                root: sub.zn.root.value,
                boundary: sub.zn.root.boundary,
                fixed_point_residual: Some(sub.zn.fixed_point_residual),
            });
        }
        rescale_to_budgets(&mut alloc, &inst.budgets, &inst.nu_sq);
        fill_budgets(&mut alloc, inst, |a| {
            md_total(
                a,
                &inst.channels,
                &inst.delta_min_sq,
                &inst.var_per_dim,
                inst.noise_var,
            )
            .unwrap_or(0.0)
        });
        (alloc, diags, dual, power)
    }
}

impl PricedProblem for DecisionProblem<'_> {
    fn budgets(&self) -> &[f64] {
        &self.inst.budgets
    }

    fn price_bound(&self) -> Vec<f64> {
        // g(λ*) ≤ g(0) ≤ K Σ_n Δ_n²/σ_n² and g(λ) ≥ Σ_k λ_k P_k
        let k = self.inst.num_users() as f64;
        let total: f64 = self
            .inst
            .delta_min_sq
            .iter()
            .zip(&self.inst.var_per_dim)
            .map(|(d, v)| k * d / v)
            .sum();
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
        DualPoint { f: dual, power }
    }
}

/// MD-maximizing FDM allocation by dual decomposition.
pub fn decision_optimal_fdm(inst: &SolverInstance, opts: &FdmOptions) -> Result<FdmSolution> {
    inst.validate()?;
    if inst.delta_min_sq.iter().all(|&d| d == 0.0) {
        let alloc = Allocation::zeros(inst.num_users(), inst.feature_dim(), Multiplexing::Fdm);
        let lambda = vec![0.0; inst.num_users()];
        return Ok(FdmSolution {
            dual_state: dual_state(lambda, &alloc, &inst.budgets, &inst.nu_sq, 0.0, 0, true),
            alloc,
            objective: 0.0,
            duality_gap: 0.0,
            subcarriers: vec![
                SubcarrierDiag {
                    root: 0.0,
                    boundary: true,
                    fixed_point_residual: Some(0.0),
                };
                inst.feature_dim()
            ],
            trace: Vec::new(),
        });
    }
    let problem = DecisionProblem { inst };
    let outer = minimize(&problem, opts, 1.0);
    let (alloc, subcarriers, dual, _) = problem.recover(&outer.lambda);
    let objective = md_total(
        &alloc,
        &inst.channels,
        &inst.delta_min_sq,
        &inst.var_per_dim,
        inst.noise_var,
    )?;
    let duality_gap = if objective > 0.0 {
        (dual - objective).abs() / objective
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

/// Dual value and recovered-primal MD at arbitrary prices.
pub fn decision_dual_snapshot(inst: &SolverInstance, lambda: &[f64]) -> Result<DualSnapshot> {
    inst.validate()?;
    if lambda.len() != inst.num_users() || lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidArgument(
            "prices must be nonnegative, one per user".into(),
        ));
    }
    let problem = DecisionProblem { inst };
    let lambda = floored(lambda, &problem.price_bound());
    let (alloc, _, dual, power_used) = problem.recover(&lambda);
    Ok(DualSnapshot {
        dual_value: dual,
        primal_objective: md_total(
            &alloc,
            &inst.channels,
            &inst.delta_min_sq,
            &inst.var_per_dim,
            inst.noise_var,
        )?,
        power_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_z_silences() {
        assert_eq!(inner_b_decision(0.3, c(1.0, 1.0), 1.0, 2.0, 0.5, 0.0), 0.0);
    }

    #[test]
    fn zero_price_inverts_channel_and_z() {
        let (h, var, z) = (c(0.6, -0.8), 0.4, 1.7);
        let b = inner_b_decision(0.0, h, 1.3, 2.0, var, z);
        assert!((b - 1.0 / (var * h.norm() * z)).abs() < 1e-14);
    }

    #[test]
    fn no_discriminative_content() {
        let zn = solve_zn(&[1.0, 2.0], &[c(1.0, 0.0); 2], &[1.0; 2], 0.0, 1.0, 0.1).unwrap();
        assert!(zn.root.boundary);
        assert_eq!(zn.root.value, 0.0);
    }

    #[test]
    fn single_user_matches_analytic_root() {
        // λν²h²/(λν² + Δ²σ²h²z²)² = σ_w²/Δ²  ⇒  z² = (√(λν²h²Δ²/σ_w²) − λν²) / (Δ²σ²h²)
        let (lambda, h, nu2, d2, var, noise) = (0.2, c(0.9, 0.3), 1.1, 0.8, 0.5, 0.05);
        let zn = solve_zn(&[lambda], &[h], &[nu2], d2, var, noise).unwrap();
        let h2 = h.norm_sqr();
        let z2 = ((lambda * nu2 * h2 * d2 / noise).sqrt() - lambda * nu2) / (d2 * var * h2);
        let z = z2.sqrt();
        assert!(
            (zn.root.value - z).abs() < 1e-10 * z,
            "{} vs {z}",
            zn.root.value
        );
        assert!(zn.fixed_point_residual < 1e-9);
    }

    #[test]
    fn stationarity_by_finite_differences() {
        let lambda = [0.05, 0.3, 0.12];
        let h = [c(0.4, -0.2), c(1.3, 0.1), c(-0.6, 0.9)];
        let nu = [1.2, 0.8, 1.0];
        let (d2, var, noise) = (0.7, 0.3, 0.1);
        let zn = solve_zn(&lambda, &h, &nu, d2, var, noise).unwrap();
        assert!(zn.fixed_point_residual < 1e-9);
        let z = zn.root.value;
        let m: Vec<f64> = (0..3)
            .map(|k| inner_b_decision(lambda[k], h[k], nu[k], d2, var, z))
            .collect();
        let lagr = |m: &[f64]| {
            let c: Vec<f64> = m.iter().zip(&h).map(|(m, h)| m * h.norm()).collect();
            let s: f64 = c.iter().sum();
            let q: f64 = c.iter().map(|x| x * x).sum();
            d2 * s * s / (var * q + noise)
                - (0..3).map(|k| lambda[k] * nu[k] * m[k] * m[k]).sum::<f64>()
        };
        for k in 0..3 {
            let eps = 1e-6 * m[k].max(1e-3);
            let mut up = m.clone();
            up[k] += eps;
            let mut dn = m.clone();
            dn[k] -= eps;
            let grad = (lagr(&up) - lagr(&dn)) / (2.0 * eps);
            assert!(grad.abs() < 1e-7, "dL/db_{k} = {grad}");
        }
    }
}
