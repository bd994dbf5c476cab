//! Brute-force reference optimizers.
//!
//! Nothing here calls into the allocators under test; the only shared code
//! is the domain types. The grid searches report an empirical cell bound:
//! the largest objective change caused by moving one final-level grid cell
//! along any coordinate from the returned point.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aircomp::Allocation;
use crate::model::{Multiplexing, SolverInstance};

/// Grid density: points per coordinate and refinement levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub levels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 64,
            levels: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub objective: f64,
    /// Effective gains `|h_k| |b_k|` at the optimum.
    pub gains: Vec<f64>,
    /// Receive gain (MSE search only).
    pub receive: Option<f64>,
    pub cell_bound: f64,
}

/// Coarse-to-fine scan of `f` over `[lo, hi]`, minimizing. Returns the
/// point, its value and the final grid step.
fn scan_min(lo: f64, hi: f64, spec: GridSpec, f: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let (lo0, hi0) = (lo, hi);
    let (mut lo, mut hi) = (lo, hi);
    let pts = spec.points.max(3);
    let mut best = (lo, f(lo));
    let mut step = hi - lo;
    for _ in 0..spec.levels.max(1) {
        step = (hi - lo) / (pts - 1) as f64;
        for i in 0..pts {
            let x = lo + step * i as f64;
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        if step == 0.0 {
            break;
        }
        lo = (best.0 - step).max(lo0);
        hi = (best.0 + step).min(hi0);
    }
    (best.0, best.1, step)
}

fn full_power_gains(h: &[Complex64], budgets: &[f64], nu: &[f64]) -> Vec<f64> {
    (0..h.len())
        .map(|k| h[k].norm() * budgets[k].sqrt() / nu[k])
        .collect()
}

/// Grid search for the minimum slot MSE
/// `σ² Σ_k (a c_k − 1)² + a² σ_w²` over `a ∈ [0, √(K σ²/σ_w²)]` and
/// `c_k ∈ [0, u_k]`.
///
/// For fixed `a` the objective separates over users, so each `c_k` is
/// found by its own one-dimensional coarse-to-fine grid.
pub fn grid_tdm_mse(
    h: &[Complex64],
    budgets: &[f64],
    nu: &[f64],
    signal_var: f64,
    noise_var: f64,
    spec: GridSpec,
) -> GridOptimum {
    let u = full_power_gains(h, budgets, nu);
    let k = u.len() as f64;
    let a_max = (k * signal_var / noise_var).sqrt();
    let user_best = |a: f64, uk: f64| scan_min(0.0, uk, spec, |c| (a * c - 1.0).powi(2));
    let value = |a: f64| {
        signal_var * u.iter().map(|&uk| user_best(a, uk).1).sum::<f64>() + a * a * noise_var
    };
    let (a, objective, a_step) = scan_min(0.0, a_max, spec, value);
    let picks: Vec<(f64, f64, f64)> = u.iter().map(|&uk| user_best(a, uk)).collect();
    let gains: Vec<f64> = picks.iter().map(|p| p.0).collect();

    let eval = |a: f64, c: &[f64]| {
        signal_var * c.iter().map(|&x| (a * x - 1.0).powi(2)).sum::<f64>() + a * a * noise_var
    };
    let here = eval(a, &gains);
    let mut bound: f64 = 0.0;
    for s in [-1.0, 1.0] {
        let a2 = (a + s * a_step).clamp(0.0, a_max);
        bound = bound.max((eval(a2, &gains) - here).abs());
        for i in 0..gains.len() {
            let mut c = gains.clone();
            c[i] = (c[i] + s * picks[i].2).clamp(0.0, u[i]);
            bound = bound.max((eval(a, &c) - here).abs());
        }
    }
    GridOptimum {
        objective,
        gains,
        receive: Some(a),
        cell_bound: bound,
    }
}

fn md_value(c: &[f64], delta_prime: f64, sigma_eq_sq: f64) -> f64 {
    let s: f64 = c.iter().sum();
    let q: f64 = c.iter().map(|x| x * x).sum();
    if q + sigma_eq_sq > 0.0 {
        delta_prime * s * s / (q + sigma_eq_sq)
    } else {
        0.0
    }
}

/// Two independent routes to the maximum slot MD
/// `Δ' (Σ c)² / (Σ c² + σ_eq²)` over `c ∈ ∏ [0, u_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdGridResult {
    /// Best of both routes.
    pub objective: f64,
    pub gains: Vec<f64>,
    pub cell_bound: f64,
    /// Direct refined grid over the box.
    pub box_route: GridOptimum,
    /// Scan over `S = Σ c`, each `S` solved as the quadratic program
    /// `min Σ c² s.t. Σ c = S, 0 ≤ c ≤ u` by water-filling.
    pub qp_route: GridOptimum,
}

/// Points per coordinate of the box grid so that one level evaluates about
/// `budget` points.
fn box_points(dims: usize, budget: usize) -> usize {
    ((budget as f64).powf(1.0 / dims as f64).floor() as usize).max(5)
}

fn box_route(u: &[f64], delta_prime: f64, sigma_eq_sq: f64, spec: GridSpec) -> GridOptimum {
    let dims = u.len();
    let pts = box_points(dims, spec.points.pow(2).max(4096));
    let mut lo = vec![0.0; dims];
    let mut hi = u.to_vec();
    let mut best = u.to_vec();
    let mut best_val = md_value(&best, delta_prime, sigma_eq_sq);
    let mut steps = vec![0.0; dims];
    let levels = spec.levels.max(1) + 6;
    let mut idx = vec![0usize; dims];
    let mut c = vec![0.0; dims];
    for _ in 0..levels {
        for d in 0..dims {
            steps[d] = (hi[d] - lo[d]) / (pts - 1) as f64;
        }
        idx.iter_mut().for_each(|i| *i = 0);
        'outer: loop {
            for d in 0..dims {
                c[d] = lo[d] + steps[d] * idx[d] as f64;
            }
            let v = md_value(&c, delta_prime, sigma_eq_sq);
            if v > best_val {
                best_val = v;
                best.copy_from_slice(&c);
            }
            for d in 0..dims {
                idx[d] += 1;
                if idx[d] < pts {
                    continue 'outer;
                }
                idx[d] = 0;
            }
            break;
        }
        for d in 0..dims {
            lo[d] = (best[d] - steps[d]).max(0.0);
            hi[d] = (best[d] + steps[d]).min(u[d]);
        }
    }
    let mut bound: f64 = 0.0;
    for d in 0..dims {
        for s in [-1.0, 1.0] {
            let mut c = best.clone();
            c[d] = (c[d] + s * steps[d]).clamp(0.0, u[d]);
            bound = bound.max((md_value(&c, delta_prime, sigma_eq_sq) - best_val).abs());
        }
    }
    GridOptimum {
        objective: best_val,
        gains: best,
        receive: None,
        cell_bound: bound,
    }
}

/// Water level `τ` with `Σ min(u_k, τ) = s`, by bisection.
fn water_level(u: &[f64], s: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, u.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if u.iter().map(|&x| x.min(mid)).sum::<f64>() < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn qp_route(u: &[f64], delta_prime: f64, sigma_eq_sq: f64, spec: GridSpec) -> GridOptimum {
    let total: f64 = u.iter().sum();
    let point = |s: f64| {
        let tau = water_level(u, s);
        u.iter().map(|&x| x.min(tau)).collect::<Vec<f64>>()
    };
    let (s, neg, step) = scan_min(0.0, total, spec, |s| {
        -md_value(&point(s), delta_prime, sigma_eq_sq)
    });
    let objective = -neg;
    let mut bound: f64 = 0.0;
    for d in [-1.0, 1.0] {
        let s2 = (s + d * step).clamp(0.0, total);
        bound = bound.max((md_value(&point(s2), delta_prime, sigma_eq_sq) - objective).abs());
    }
    GridOptimum {
        objective,
        gains: point(s),
        receive: None,
        cell_bound: bound,
    }
}

/// Maximum slot MD by a refined box grid and, independently, by a scan
/// over the quadratic-program reformulation.
pub fn grid_tdm_md(
    h: &[Complex64],
    budgets: &[f64],
    nu: &[f64],
    delta_prime: f64,
    sigma_eq_sq: f64,
    spec: GridSpec,
) -> MdGridResult {
    let u = full_power_gains(h, budgets, nu);
    let boxed = box_route(&u, delta_prime, sigma_eq_sq, spec);
    let qp = qp_route(&u, delta_prime, sigma_eq_sq, spec);
    let (objective, gains) = if qp.objective >= boxed.objective {
        (qp.objective, qp.gains.clone())
    } else {
        (boxed.objective, boxed.gains.clone())
    };
    MdGridResult {
        objective,
        gains,
        cell_bound: boxed.cell_bound.max(qp.cell_bound),
        box_route: boxed,
        qp_route: qp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimalObjective {
    /// Minimize the total aggregation MSE.
    Mse,
    /// Maximize the total Mahalanobis distance.
    Md,
}

/// FDM problem in the variables `p_{k,n} = ν_{k,n} |b_{k,n}| ≥ 0` with
/// `Σ_n p_{k,n}² ≤ P_k`, transmit phases aligned with the channel and the
/// receive gain eliminated at its MMSE value.
///
/// Both objectives reduce to maximizing
/// `Φ(p) = Σ_n w_n S_n² / (σ_n² Q_n + σ_w²)` with `S_n = Σ_k g_{k,n} p_{k,n}`,
/// `Q_n = Σ_k (g_{k,n} p_{k,n})²` and `g = |h| / ν`: `w_n = Δ²_n` gives the
/// MD, and `w_n = σ_n⁴` gives `K Σ σ_n² − MSE`.
#[derive(Debug, Clone)]
pub struct PrimalProblem {
    gain: Vec<Vec<f64>>,
    weight: Vec<f64>,
    var: Vec<f64>,
    noise: f64,
    budgets: Vec<f64>,
    objective: PrimalObjective,
}

impl PrimalProblem {
    pub fn new(inst: &SolverInstance, objective: PrimalObjective) -> Self {
        let (k, m) = (inst.num_users(), inst.feature_dim());
        let gain = (0..k)
            .map(|i| {
                (0..m)
                    .map(|n| inst.channels.gain(i, n).norm() / inst.nu_sq[i][n].sqrt())
                    .collect()
            })
            .collect();
        let weight = match objective {
            PrimalObjective::Md => inst.delta_min_sq.clone(),
            PrimalObjective::Mse => inst.var_per_dim.iter().map(|v| v * v).collect(),
        };
        PrimalProblem {
            gain,
            weight,
            var: inst.var_per_dim.clone(),
            noise: inst.noise_var,
            budgets: inst.budgets.clone(),
            objective,
        }
    }

    fn sums(&self, p: &[Vec<f64>], n: usize) -> (f64, f64) {
        let mut s = 0.0;
        let mut q = 0.0;
        for (row, g) in p.iter().zip(&self.gain) {
            let c = g[n] * row[n];
            s += c;
            q += c * c;
        }
        (s, q)
    }

    pub fn phi(&self, p: &[Vec<f64>]) -> f64 {
        (0..self.var.len())
            .map(|n| {
                let (s, q) = self.sums(p, n);
                self.weight[n] * s * s / (self.var[n] * q + self.noise)
            })
            .sum()
    }

    pub fn gradient(&self, p: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut grad = vec![vec![0.0; self.var.len()]; p.len()];
        for n in 0..self.var.len() {
            let (s, q) = self.sums(p, n);
            let d = self.var[n] * q + self.noise;
            for k in 0..p.len() {
                let c = self.gain[k][n] * p[k][n];
                let dc = self.weight[n] * (2.0 * s * d - 2.0 * self.var[n] * c * s * s) / (d * d);
                grad[k][n] = dc * self.gain[k][n];
            }
        }
        grad
    }

    /// Objective in its natural units: MSE or MD.
    pub fn objective_value(&self, p: &[Vec<f64>]) -> f64 {
        match self.objective {
            PrimalObjective::Md => self.phi(p),
            PrimalObjective::Mse => {
                let k = p.len() as f64;
                (0..self.var.len())
                    .map(|n| {
                        let (s, q) = self.sums(p, n);
                        let v = self.var[n];
                        k * v - v * v * s * s / (v * q + self.noise)
                    })
                    .sum()
            }
        }
    }

    /// Euclidean projection onto `{p ≥ 0, Σ_n p_{k,n}² ≤ P_k}` row by row.
    pub fn project(&self, p: &mut [Vec<f64>]) {
        for (row, budget) in p.iter_mut().zip(&self.budgets) {
            row.iter_mut().for_each(|x| *x = x.max(0.0));
            let norm_sq: f64 = row.iter().map(|x| x * x).sum();
            if norm_sq > *budget {
                let s = (budget / norm_sq).sqrt();
                row.iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    /// Largest relative deviation between the analytic gradient and central
    /// differences with step `eps` at `p`.
    pub fn gradient_check(&self, p: &[Vec<f64>], eps: f64) -> f64 {
        let grad = self.gradient(p);
        let scale = grad
            .iter()
            .flatten()
            .fold(0.0f64, |m, g| m.max(g.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for k in 0..p.len() {
            for n in 0..self.var.len() {
                let mut up = p.to_vec();
                up[k][n] += eps;
                let mut dn = p.to_vec();
                dn[k][n] -= eps;
                let fd = (self.phi(&up) - self.phi(&dn)) / (2.0 * eps);
                worst = worst.max((fd - grad[k][n]).abs() / scale);
            }
        }
        worst
    }

    /// Projected gradient ascent on `Φ` with a backtracking (halving) line
    /// search. Returns the final point and its `Φ`.
    pub fn ascend(&self, start: Vec<Vec<f64>>, max_iter: usize) -> (Vec<Vec<f64>>, f64) {
        let mut x = start;
        self.project(&mut x);
        let mut fx = self.phi(&x);
        let mut step = 1.0;
        let mut stalls = 0;
        for _ in 0..max_iter {
            let g = self.gradient(&x);
            let mut accepted = false;
            for _ in 0..80 {
                let mut y: Vec<Vec<f64>> = x
                    .iter()
                    .zip(&g)
                    .map(|(r, gr)| r.iter().zip(gr).map(|(a, b)| a + step * b).collect())
                    .collect();
                self.project(&mut y);
                let ascent: f64 = y
                    .iter()
                    .flatten()
                    .zip(x.iter().flatten())
                    .zip(g.iter().flatten())
                    .map(|((yv, xv), gv)| gv * (yv - xv))
                    .sum();
                let fy = self.phi(&y);
                if fy >= fx + 1e-4 * ascent && fy >= fx {
                    let gain = fy - fx;
                    x = y;
                    fx = fy;
                    accepted = true;
                    step *= 2.0;
                    if gain <= 1e-15 * fx.abs().max(1e-300) {
                        stalls += 1;
                    } else {
                        stalls = 0;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted || stalls >= 5 {
                break;
            }
        }
        (x, fx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalOptimum {
    /// Best MSE (smallest) or MD (largest) over all starts.
    pub objective: f64,
    pub alloc: Allocation,
    /// Objective reached by each start.
    pub per_start: Vec<f64>,
}

/// Multistart projected-gradient reference for the FDM problems.
///
/// Start 0 splits each budget equally; the rest are uniformly random
/// directions in the nonnegative orthant at a random fraction of the budget.
pub fn multistart_primal_fdm(
    inst: &SolverInstance,
    objective: PrimalObjective,
    starts: usize,
    seed: u64,
) -> PrimalOptimum {
    let problem = PrimalProblem::new(inst, objective);
    let (k, m) = (inst.num_users(), inst.feature_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
    let mut per_start = Vec::with_capacity(starts.max(1));
    for s in 0..starts.max(1) {
        let start: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                if s == 0 {
                    vec![(inst.budgets[i] / m as f64).sqrt(); m]
                } else {
                    let dir: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    let radius = inst.budgets[i].sqrt() * rng.random::<f64>();
                    dir.iter().map(|x| x * radius / norm).collect()
                }
            })
            .collect();
        let (p, phi) = problem.ascend(start, 20_000);
        per_start.push(problem.objective_value(&p));
        if best.as_ref().is_none_or(|b| phi > b.1) {
            best = Some((p, phi));
        }
    }
    let (p, _) = best.expect("at least one start");

    let mut alloc = Allocation::zeros(k, m, Multiplexing::Fdm);
    for i in 0..k {
        for n in 0..m {
            let h = inst.channels.gain(i, n);
            let mag = p[i][n] / inst.nu_sq[i][n].sqrt();
            alloc.transmit[i][n] = Complex64::from_polar(mag, -h.arg());
        }
    }
    for n in 0..m {
        let (s, q) = problem.sums(&p, n);
        let v = inst.var_per_dim[n];
        alloc.receive[n] = Complex64::new(v * s / (v * q + inst.noise_var), 0.0);
    }
    PrimalOptimum {
        objective: problem.objective_value(&p),
        alloc,
        per_start,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelRealization;

    #[test]
    fn single_user_mse_matches_calculus() {
        // one full-power user: min_a σ²(a u − 1)² + a² σ_w² = σ² σ_w² / (σ² u² + σ_w²)
        let (h, p, nu, var, noise) = (Complex64::new(0.3, 0.4), 2.0, 1.2, 0.7, 0.1);
        let g = grid_tdm_mse(&[h], &[p], &[nu], var, noise, GridSpec::default());
        let u = h.norm() * p.sqrt() / nu;
        let exact = var * noise / (var * u * u + noise);
        assert!((g.objective - exact).abs() <= 1e-9 * exact + g.cell_bound);
    }

    #[test]
    fn md_routes_agree() {
        let h = [
            Complex64::new(0.2, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(5.0, 0.0),
        ];
        let r = grid_tdm_md(&h, &[1.0; 3], &[1.0; 3], 1.0, 1.0, GridSpec::default());
        let rel = (r.box_route.objective - r.qp_route.objective).abs() / r.objective;
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn equal_links_use_full_power() {
        let h = [Complex64::new(0.0, 0.8); 3];
        let r = grid_tdm_md(&h, &[1.0; 3], &[1.0; 3], 2.0, 0.5, GridSpec::default());
        for c in &r.gains {
            assert!((c - 0.8).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ch = ChannelRealization::new(vec![
            vec![Complex64::new(0.4, 0.1), Complex64::new(-1.1, 0.3)],
            vec![Complex64::new(0.2, -0.9), Complex64::new(0.5, 0.5)],
        ])
        .unwrap();
        let inst = SolverInstance {
            channels: ch,
            budgets: vec![1.0, 2.0],
            nu_sq: vec![vec![1.1, 0.6]; 2],
            var_per_dim: vec![0.3, 0.2],
            delta_min_sq: vec![0.5, 0.1],
            noise_var: 0.1,
        };
        let p = vec![vec![0.3, 0.7], vec![0.9, 0.2]];
        for obj in [PrimalObjective::Mse, PrimalObjective::Md] {
            let err = PrimalProblem::new(&inst, obj).gradient_check(&p, 1e-6);
            assert!(err < 1e-5, "{obj:?}: {err}");
        }
    }
}
