//! Bracketing bisection for strictly decreasing scalar equations on `(0, ∞)`.

use serde::{Deserialize, Serialize};

/// Outcome of a scalar solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarRoot {
    pub value: f64,
    /// The equation has no positive root; `value` is the boundary point zero.
    pub boundary: bool,
    /// Final bracket `[lo, hi]` with `f(lo) > 0 >= f(hi)`; `(0, 0)` on the boundary.
    pub bracket: (f64, f64),
}

impl ScalarRoot {
    pub(crate) fn at_zero() -> Self {
        ScalarRoot {
            value: 0.0,
            boundary: true,
            bracket: (0.0, 0.0),
        }
    }
}

/// Default relative bracket width at which bisection stops.
pub const ROOT_REL_TOL: f64 = 1e-12;

/// Root of a strictly decreasing `f` with `f(0+) > 0`.
///
/// The bracket is grown or shrunk geometrically from one, then halved until
/// its width drops below `rel_tol` times its upper end.
pub(crate) fn decreasing_root(f: impl Fn(f64) -> f64, rel_tol: f64) -> ScalarRoot {
    let mut hi = 1.0f64;
    let mut lo: f64;
    if f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        while f(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return ScalarRoot {
                    value: f64::INFINITY,
                    boundary: false,
                    bracket: (lo, hi),
                };
            }
        }
    } else {
        let mut probe = 0.5;
        while probe > f64::MIN_POSITIVE && f(probe) <= 0.0 {
            hi = probe;
            probe *= 0.5;
        }
        lo = if probe > f64::MIN_POSITIVE {
            probe
        } else {
            0.0
        };
    }
    for _ in 0..400 {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ScalarRoot {
        value: 0.5 * (lo + hi),
        boundary: false,
        bracket: (lo, hi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_roots_across_scales() {
        for target in [1e-8, 0.3, 1.0, 7.5, 1e9] {
            let r = decreasing_root(|x| target - x, 1e-13);
            assert!(
                (r.value - target).abs() <= 1e-12 * target,
                "{target} -> {}",
                r.value
            );
            assert!(target - r.bracket.0 > 0.0 && target - r.bracket.1 <= 0.0);
        }
    }
}
