//! Outer price updates shared by both FDM problems.
//!
//! Both duals are handled as minimizing a convex `f(λ)` over `λ ≥ 0` whose
//! subgradient is `P − p(λ)`, where `p(λ)` is the power drawn by the inner
//! solution (`f = −g` for the MSE problem, `f = g` for the MD problem).

use super::{FdmOptions, OuterMethod, TraceRow};

pub(super) struct DualPoint {
    pub f: f64,
    pub power: Vec<f64>,
}

pub(super) trait PricedProblem {
    fn budgets(&self) -> &[f64];
    /// Upper bound on every optimal price.
    fn price_bound(&self) -> Vec<f64>;
    /// Starting prices for the subgradient method.
    fn initial_prices(&self) -> Vec<f64>;
    fn evaluate(&self, lambda: &[f64]) -> DualPoint;
}

pub(super) struct OuterResult {
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// Prices are evaluated no lower than this fraction of their bound so that
/// every inner problem stays bounded.
const PRICE_FLOOR: f64 = 1e-13;

pub(super) fn floored(lambda: &[f64], bound: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .zip(bound)
        .map(|(l, u)| l.max(PRICE_FLOOR * u))
        .collect()
}

fn max_violation(power: &[f64], budgets: &[f64]) -> f64 {
    power
        .iter()
        .zip(budgets)
        .map(|(p, b)| ((p - b) / b).max(0.0))
        .fold(0.0, f64::max)
}

pub(super) fn minimize<P: PricedProblem>(problem: &P, opts: &FdmOptions, sign: f64) -> OuterResult {
    match opts.outer {
        OuterMethod::Ellipsoid => ellipsoid(problem, opts, sign),
        OuterMethod::Subgradient => subgradient(problem, opts, sign),
    }
}

fn ellipsoid<P: PricedProblem>(problem: &P, opts: &FdmOptions, sign: f64) -> OuterResult {
    let budgets = problem.budgets();
    let bound = problem.price_bound();
    let n = budgets.len();
    let mut x: Vec<f64> = bound.iter().map(|u| 0.5 * u).collect();
    // axis-aligned ellipsoid through the corners of the box [0, bound]
    let mut shape = vec![vec![0.0; n]; n];
    for i in 0..n {
        shape[i][i] = 1.0001 * n as f64 * (0.5 * bound[i]).powi(2);
    }

    let mut best_x = floored(&x, &bound);
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let grad: Vec<f64> = if let Some(k) = (0..n).find(|&k| x[k] < 0.0) {
            let mut g = vec![0.0; n];
            g[k] = -1.0;
            g
        } else {
            let at = floored(&x, &bound);
            let point = problem.evaluate(&at);
            if point.f < upper {
                upper = point.f;
                best_x = at;
            }
            let g: Vec<f64> = budgets
                .iter()
                .zip(&point.power)
                .map(|(b, p)| b - p)
                .collect();
            let width = quad_form(&shape, &g).max(0.0).sqrt();
            lower = lower.max(point.f - width);
            if opts.trace {
                trace.push(TraceRow {
                    iteration: it,
                    dual_value: sign * point.f,
                    max_violation: max_violation(&point.power, budgets),
                });
            }
            if upper - lower <= opts.tol * upper.abs().max(f64::MIN_POSITIVE) || width == 0.0 {
                converged = true;
                break;
            }
            g
        };
        if !cut(&mut x, &mut shape, &grad) {
            // ellipsoid degenerated to numerical noise
            converged = upper - lower <= 1e3 * opts.tol * upper.abs().max(f64::MIN_POSITIVE);
            break;
        }
    }
    OuterResult {
        lambda: best_x,
        iterations,
        converged,
        trace,
    }
}

fn quad_form(shape: &[Vec<f64>], g: &[f64]) -> f64 {
    let n = g.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += g[i] * shape[i][j] * g[j];
        }
    }
    acc
}

/// Central cut keeping `{y : gᵀ(y − x) ≤ 0}`. Returns false once the
/// ellipsoid can no longer be updated.
fn cut(x: &mut [f64], shape: &mut [Vec<f64>], g: &[f64]) -> bool {
    let n = x.len();
    let q = quad_form(shape, g);
    if !(q > 0.0 && q.is_finite()) {
        return false;
    }
    let norm = q.sqrt();
    let eg: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| shape[i][j] * g[j]).sum::<f64>() / norm)
        .collect();
    if n == 1 {
        x[0] -= 0.5 * eg[0];
        shape[0][0] *= 0.25;
        return true;
    }
    let nf = n as f64;
    for i in 0..n {
        x[i] -= eg[i] / (nf + 1.0);
    }
    let scale = nf * nf / (nf * nf - 1.0);
    let rank_one = 2.0 / (nf + 1.0);
    for i in 0..n {
        for j in 0..n {
            shape[i][j] = scale * (shape[i][j] - rank_one * eg[i] * eg[j]);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (shape[i][j] + shape[j][i]);
            shape[i][j] = avg;
            shape[j][i] = avg;
        }
    }
    true
}

fn subgradient<P: PricedProblem>(problem: &P, opts: &FdmOptions, sign: f64) -> OuterResult {
    let budgets = problem.budgets();
    let bound = problem.price_bound();
    let base = problem.initial_prices();
    let n = budgets.len();
    let mut mu = vec![1.0; n];
    let mut best_x = floored(&base, &bound);
    let mut upper = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=opts.max_iter {
        iterations = t;
        let lambda: Vec<f64> = mu.iter().zip(&base).map(|(m, b)| m * b).collect();
        let at = floored(&lambda, &bound);
        let point = problem.evaluate(&at);
        if point.f < upper {
            upper = point.f;
            best_x = at.clone();
        }
        let violation = max_violation(&point.power, budgets);
        if opts.trace {
            trace.push(TraceRow {
                iteration: t,
                dual_value: sign * point.f,
                max_violation: violation,
            });
        }
        let step = opts.step0 / (t as f64).sqrt();
        let mut max_move: f64 = 0.0;
        let mut max_cs: f64 = 0.0;
        for k in 0..n {
            let rel = (budgets[k] - point.power[k]) / budgets[k];
            let next = (mu[k] - step * rel).max(0.0);
            max_move = max_move.max((next - mu[k]).abs());
            max_cs = max_cs.max(if mu[k] > 0.0 { rel.abs() } else { 0.0 });
            mu[k] = next;
        }
        if violation <= opts.tol.max(1e-9)
            && max_cs <= opts.tol.max(1e-9)
            && max_move <= opts.tol.max(1e-9)
        {
            converged = true;
            break;
        }
    }
    OuterResult {
        lambda: best_x,
        iterations,
        converged,
        trace,
    }
}
