//! Closed-form TDM allocators.
//!
//! With slow fading every slot sees the same channel, so the problem splits
//! into independent per-slot problems. Each user's per-slot amplitude budget
//! is expressed through its full-power effective gain `u_k = |h_k| √P_k / ν_k`.
//! Both allocators return a two-regime structure: weak users transmit at full
//! power, strong users are held at a common effective gain.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aircomp::Allocation;
use crate::error::{Error, Result};
use crate::model::{Multiplexing, SolverInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    FullPower,
    /// Channel inversion (MSE) or capped at the common threshold (MD).
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// Number of full-power users `k*` in the MSE-optimal solution.
    Index(usize),
    /// Capping threshold `τ*` on the effective gain.
    Cap(f64),
}

/// Solution of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmSolution {
    pub transmit: Vec<Complex64>,
    pub receive: Complex64,
    pub threshold: Threshold,
    /// Slot MSE or slot Mahalanobis distance.
    pub objective: f64,
    pub regimes: Vec<Regime>,
    /// Set when every channel is zero and nothing can be delivered.
    pub all_zero: bool,
}

impl TdmSolution {
    /// Effective gains `|h_k| |b_k|`.
    pub fn effective_gains(&self, h: &[Complex64]) -> Vec<f64> {
        h.iter()
            .zip(&self.transmit)
            .map(|(h, b)| h.norm() * b.norm())
            .collect()
    }
}

fn full_power_gains(h: &[Complex64], budgets: &[f64], nu: &[f64]) -> Result<Vec<f64>> {
    if h.len() != budgets.len() || h.len() != nu.len() || h.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains, {} budgets, {} second moments",
            h.len(),
            budgets.len(),
            nu.len()
        )));
    }
    if budgets
        .iter()
        .chain(nu)
        .any(|&v| !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidArgument(
            "budgets and second moments must be positive".into(),
        ));
    }
    Ok(h.iter()
        .zip(budgets)
        .zip(nu)
        .map(|((h, p), nu)| h.norm() * p.sqrt() / nu)
        .collect())
}

fn ascending_order(u: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&i, &j| u[i].total_cmp(&u[j]));
    order
}

/// Phase that makes `h b` real and nonnegative.
fn aligned(h: Complex64, magnitude: f64) -> Complex64 {
    if h.norm() > 0.0 {
        Complex64::from_polar(magnitude, -h.arg())
    } else {
        Complex64::new(magnitude, 0.0)
    }
}

/// MSE-optimal slot allocation: the `k*` weakest users at full power, the
/// rest inverting their channel against the MMSE receive gain.
///
/// Every threshold `k* ∈ 1..=K` is evaluated; the cheapest wins, smallest
/// `k*` on ties.
pub fn comp_optimal_tdm(
    h: &[Complex64],
    budgets: &[f64],
    nu: &[f64],
    signal_var: f64,
    noise_var: f64,
) -> Result<TdmSolution> {
    let u = full_power_gains(h, budgets, nu)?;
    if let Some(user) = h.iter().position(|g| g.norm() == 0.0) {
        return Err(Error::ZeroChannelGain { user });
    }
    if !(signal_var > 0.0 && noise_var > 0.0) {
        return Err(Error::InvalidArgument(
            "signal and noise variances must be positive".into(),
        ));
    }
    let order = ascending_order(&u);

    let mut best: Option<(f64, usize, f64)> = None;
    let (mut sum_u, mut sum_u2) = (0.0, 0.0);
    for (idx, &k) in order.iter().enumerate() {
        sum_u += u[k];
        sum_u2 += u[k] * u[k];
        let a = signal_var * sum_u / (signal_var * sum_u2 + noise_var);
        let mse = signal_var
            * u.iter()
                .map(|&uk| {
                    let c = uk.min(1.0 / a);
                    (a * c - 1.0).powi(2)
                })
                .sum::<f64>()
            + a * a * noise_var;
        if best.is_none_or(|(m, _, _)| mse < m) {
            best = Some((mse, idx + 1, a));
        }
    }
    let (objective, kstar, a) = best.expect("at least one user");

    let mut regimes = Vec::with_capacity(u.len());
    let transmit = (0..u.len())
        .map(|k| {
            if u[k] * a <= 1.0 {
                regimes.push(Regime::FullPower);
                aligned(h[k], budgets[k].sqrt() / nu[k])
            } else {
                regimes.push(Regime::Capped);
                aligned(h[k], 1.0 / (a * h[k].norm()))
            }
        })
        .collect();
    Ok(TdmSolution {
        transmit,
        receive: Complex64::new(a, 0.0),
        threshold: Threshold::Index(kstar),
        objective,
        regimes,
        all_zero: false,
    })
}

/// `Δ' (Σ c)² / (Σ c² + σ_eq²)`.
fn fractional_md(c: impl Iterator<Item = f64> + Clone, delta_prime: f64, sigma_eq_sq: f64) -> f64 {
    let s: f64 = c.clone().sum();
    let q: f64 = c.map(|x| x * x).sum();
    let den = q + sigma_eq_sq;
    if den > 0.0 {
        delta_prime * s * s / den
    } else {
        0.0
    }
}

/// MD-optimal slot allocation with capped effective gains `c_k = min(u_k, τ*)`.
///
/// `delta_prime = Δ²_min / σ²` and `sigma_eq_sq = σ_w² / σ²`. The capping
/// threshold is found by scanning the segments between consecutive sorted
/// `u_k`: on each, the objective is unimodal in `τ` with stationary point
/// `(Σ_{k≤j} u_k² + σ_eq²) / Σ_{k≤j} u_k`, clamped to the segment.
pub fn decision_optimal_tdm(
    h: &[Complex64],
    budgets: &[f64],
    nu: &[f64],
    delta_prime: f64,
    sigma_eq_sq: f64,
) -> Result<TdmSolution> {
    let u = full_power_gains(h, budgets, nu)?;
    if !(delta_prime >= 0.0 && sigma_eq_sq >= 0.0) {
        return Err(Error::InvalidArgument(
            "delta_prime and sigma_eq_sq must be nonnegative".into(),
        ));
    }
    let k = u.len();
    let full = |k: usize| aligned(h[k], budgets[k].sqrt() / nu[k]);

    if u.iter().all(|&x| x == 0.0) {
        return Ok(TdmSolution {
            transmit: vec![Complex64::new(0.0, 0.0); k],
            receive: Complex64::new(0.0, 0.0),
            threshold: Threshold::Cap(0.0),
            objective: 0.0,
            regimes: vec![Regime::FullPower; k],
            all_zero: true,
        });
    }

    let order = ascending_order(&u);
    let sorted: Vec<f64> = order.iter().map(|&i| u[i]).collect();
    let u_max = sorted[k - 1];

    let tau = if delta_prime == 0.0 {
        // every allocation scores zero; keep the feature on air at full power
        u_max
    } else {
        let objective_at =
            |tau: f64| fractional_md(u.iter().map(|&x| x.min(tau)), delta_prime, sigma_eq_sq);
        // segment 0 (nobody saturated) is increasing in τ: its optimum is u_(1)
        let mut best_tau = sorted[0];
        let mut best_val = objective_at(best_tau);
        let (mut a_j, mut b_j) = (0.0, 0.0);
        for j in 1..=k {
            a_j += sorted[j - 1];
            b_j += sorted[j - 1] * sorted[j - 1];
            let lo = sorted[j - 1];
            let candidate = if j == k {
                lo
            } else {
                let hi = sorted[j];
                let stationary = if a_j > 0.0 {
                    (b_j + sigma_eq_sq) / a_j
                } else {
                    f64::INFINITY
                };
                if stationary > lo && stationary <= hi {
                    stationary
                } else if stationary <= lo {
                    lo
                } else {
                    hi
                }
            };
            let val = objective_at(candidate);
            if val > best_val || (val == best_val && candidate < best_tau) {
                best_val = val;
                best_tau = candidate;
            }
        }
        best_tau
    };

    let mut regimes = Vec::with_capacity(k);
    let transmit: Vec<Complex64> = (0..k)
        .map(|i| {
            if u[i] <= tau {
                regimes.push(Regime::FullPower);
                full(i)
            } else {
                regimes.push(Regime::Capped);
                aligned(h[i], tau / h[i].norm())
            }
        })
        .collect();
    let c: Vec<f64> = u.iter().map(|&x| x.min(tau)).collect();
    let objective = fractional_md(c.iter().copied(), delta_prime, sigma_eq_sq);
    let coherent: f64 = c.iter().sum();
    let den = c.iter().map(|x| x * x).sum::<f64>() + sigma_eq_sq;
    // MMSE receive gain in units where the signal variance is one
    let receive = Complex64::new(if den > 0.0 { coherent / den } else { 0.0 }, 0.0);
    Ok(TdmSolution {
        transmit,
        receive,
        threshold: Threshold::Cap(tau),
        objective,
        regimes,
        all_zero: false,
    })
}

/// Audit of the two-regime structure: every user is either at full power or
/// held at one common effective gain that is at least every full-power gain.
pub fn is_two_regime(
    sol: &TdmSolution,
    h: &[Complex64],
    budgets: &[f64],
    nu: &[f64],
    rel_tol: f64,
) -> bool {
    let u = match full_power_gains(h, budgets, nu) {
        Ok(u) => u,
        Err(_) => return false,
    };
    let c = sol.effective_gains(h);
    let mut cap: Option<f64> = None;
    for i in 0..u.len() {
        match sol.regimes[i] {
            Regime::FullPower => {
                let want = budgets[i].sqrt() / nu[i];
                if (sol.transmit[i].norm() - want).abs() > rel_tol * want {
                    return false;
                }
            }
            Regime::Capped => match cap {
                None => cap = Some(c[i]),
                Some(t) if (c[i] - t).abs() <= rel_tol * t.max(f64::MIN_POSITIVE) => {}
                Some(_) => return false,
            },
        }
    }
    if let Some(t) = cap {
        for i in 0..u.len() {
            if sol.regimes[i] == Regime::FullPower && c[i] > t * (1.0 + rel_tol) {
                return false;
            }
            if sol.regimes[i] == Regime::Capped && u[i] < t * (1.0 - rel_tol) {
                return false;
            }
        }
    }
    true
}

/// Whole-block TDM allocation assembled from per-slot solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmAllocation {
    pub alloc: Allocation,
    pub slots: Vec<TdmSolution>,
    /// Sum of the per-slot objectives.
    pub objective: f64,
}

/// Splits each user's budget evenly over the `M` slots.
fn per_slot_budgets(budgets: &[f64], slots: usize) -> Vec<f64> {
    budgets.iter().map(|p| p / slots as f64).collect()
}

fn assemble(slots: Vec<TdmSolution>, num_users: usize, scheme: Multiplexing) -> TdmAllocation {
    let m = slots.len();
    let mut alloc = Allocation::zeros(num_users, m, scheme);
    for (t, s) in slots.iter().enumerate() {
        for k in 0..num_users {
            alloc.transmit[k][t] = s.transmit[k];
        }
        alloc.receive[t] = s.receive;
    }
    let objective = slots.iter().map(|s| s.objective).sum();
    TdmAllocation {
        alloc,
        slots,
        objective,
    }
}

/// MSE-optimal TDM allocation over all `M` slots.
pub fn comp_optimal_tdm_allocation(inst: &SolverInstance) -> Result<TdmAllocation> {
    inst.validate()?;
    let m = inst.feature_dim();
    let slot_budgets = per_slot_budgets(&inst.budgets, m);
    let slots = (0..m)
        .map(|t| {
            comp_optimal_tdm(
                &inst.channels.column(t),
                &slot_budgets,
                &nu_column(inst, t),
                inst.var_per_dim[t],
                inst.noise_var,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(slots, inst.num_users(), Multiplexing::Tdm))
}

/// MD-optimal TDM allocation over all `M` slots.
pub fn decision_optimal_tdm_allocation(inst: &SolverInstance) -> Result<TdmAllocation> {
    inst.validate()?;
    let m = inst.feature_dim();
    let slot_budgets = per_slot_budgets(&inst.budgets, m);
    let slots = (0..m)
        .map(|t| {
            let var = inst.var_per_dim[t];
            decision_optimal_tdm(
                &inst.channels.column(t),
                &slot_budgets,
                &nu_column(inst, t),
                inst.delta_min_sq[t] / var,
                inst.noise_var / var,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(slots, inst.num_users(), Multiplexing::Tdm))
}

fn nu_column(inst: &SolverInstance, t: usize) -> Vec<f64> {
    inst.nu_sq.iter().map(|row| row[t].sqrt()).collect()
}
