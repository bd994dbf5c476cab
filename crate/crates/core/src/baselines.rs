//! Reference allocations: equal power split and truncated channel inversion.
//!
//! Both align transmit phases with the channel and use the MMSE receive
//! coefficient for the resulting transmit side.

use num_complex::Complex64;

use crate::aircomp::{set_mmse_receive, Allocation};
use crate::error::{Error, Result};
use crate::model::{ChannelRealization, Multiplexing};

fn aligned(h: Complex64, magnitude: f64) -> Complex64 {
    if h.norm() > 0.0 {
        Complex64::from_polar(magnitude, -h.arg())
    } else {
        Complex64::new(magnitude, 0.0)
    }
}

fn check(
    channels: &ChannelRealization,
    budgets: &[f64],
    nu_sq: &[Vec<f64>],
    var_per_dim: &[f64],
) -> Result<()> {
    let (k, m) = (channels.num_users(), channels.num_columns());
    if budgets.len() != k
        || nu_sq.len() != k
        || nu_sq.iter().any(|r| r.len() != m)
        || var_per_dim.len() != m
    {
        return Err(Error::DimensionMismatch(format!(
            "baseline inputs inconsistent with a {k}x{m} channel"
        )));
    }
    Ok(())
}

/// Each user spends `P_k / M` on every element: `|b_{k,n}|² ν²_{k,n} = P_k / M`.
pub fn equal_allocation(
    channels: &ChannelRealization,
    budgets: &[f64],
    nu_sq: &[Vec<f64>],
    var_per_dim: &[f64],
    noise_var: f64,
    scheme: Multiplexing,
) -> Result<Allocation> {
    check(channels, budgets, nu_sq, var_per_dim)?;
    let m = channels.num_columns();
    let mut alloc = Allocation::zeros(channels.num_users(), m, scheme);
    for (k, row) in alloc.transmit.iter_mut().enumerate() {
        for (n, b) in row.iter_mut().enumerate() {
            let share = budgets[k] / m as f64;
            *b = aligned(channels.gain(k, n), (share / nu_sq[k][n]).sqrt());
        }
    }
    set_mmse_receive(&mut alloc, channels, var_per_dim, noise_var);
    Ok(alloc)
}

/// Truncated channel inversion `|b_{k,n}| = min(√(P_k / (M ν²)), 1/|h_{k,n}|)`,
/// with a row scaled back to the budget if the sum still exceeds it.
pub fn channel_inversion(
    channels: &ChannelRealization,
    budgets: &[f64],
    nu_sq: &[Vec<f64>],
    var_per_dim: &[f64],
    noise_var: f64,
    scheme: Multiplexing,
) -> Result<Allocation> {
    check(channels, budgets, nu_sq, var_per_dim)?;
    let m = channels.num_columns();
    let mut alloc = Allocation::zeros(channels.num_users(), m, scheme);
    for k in 0..channels.num_users() {
        let mut used = 0.0;
        for n in 0..m {
            let h = channels.gain(k, n);
            let cap = (budgets[k] / (m as f64 * nu_sq[k][n])).sqrt();
            let mag = if h.norm() > 0.0 {
                cap.min(1.0 / h.norm())
            } else {
                0.0
            };
            used += mag * mag * nu_sq[k][n];
            alloc.transmit[k][n] = aligned(h, mag);
        }
        if used > budgets[k] {
            let s = (budgets[k] / used).sqrt();
            alloc.transmit[k].iter_mut().for_each(|b| *b *= s);
        }
    }
    set_mmse_receive(&mut alloc, channels, var_per_dim, noise_var);
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channels(scale: f64) -> ChannelRealization {
        ChannelRealization::new(vec![
            vec![
                Complex64::new(0.3, 0.4) * scale,
                Complex64::new(-1.0, 0.2) * scale,
            ],
            vec![
                Complex64::new(0.0, 0.9) * scale,
                Complex64::new(0.5, -0.5) * scale,
            ],
        ])
        .unwrap()
    }

    #[test]
    fn equal_is_tight_and_aligned() {
        let ch = channels(1.0);
        let nu = vec![vec![1.2, 0.7]; 2];
        let a =
            equal_allocation(&ch, &[2.0, 3.0], &nu, &[0.5, 0.5], 0.1, Multiplexing::Fdm).unwrap();
        assert!((a.power_used(0, &nu) - 2.0).abs() < 1e-12);
        assert!((a.power_used(1, &nu) - 3.0).abs() < 1e-12);
        for n in 0..2 {
            for g in a.effective_gains(&ch, n) {
                assert!(g.im.abs() < 1e-12 && g.re > 0.0);
            }
        }
    }

    #[test]
    fn single_column_gets_full_power() {
        let ch = ChannelRealization::new(vec![vec![Complex64::new(0.5, 0.0)]]).unwrap();
        let a =
            equal_allocation(&ch, &[4.0], &[vec![2.0]], &[1.0], 0.1, Multiplexing::Tdm).unwrap();
        assert!((a.transmit[0][0].norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn strong_channels_underuse_power() {
        let ch = channels(100.0);
        let nu = vec![vec![1.0; 2]; 2];
        let a =
            channel_inversion(&ch, &[1.0, 1.0], &nu, &[1.0; 2], 0.1, Multiplexing::Fdm).unwrap();
        for k in 0..2 {
            assert!(a.power_used(k, &nu) < 1e-3);
            for n in 0..2 {
                assert!((a.transmit[k][n].norm() * ch.gain(k, n).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weak_channels_match_equal_split() {
        let ch = channels(1e-3);
        let nu = vec![vec![1.0, 2.0]; 2];
        let budgets = [1.0, 0.5];
        let inv = channel_inversion(&ch, &budgets, &nu, &[1.0; 2], 0.1, Multiplexing::Fdm).unwrap();
        let eq = equal_allocation(&ch, &budgets, &nu, &[1.0; 2], 0.1, Multiplexing::Fdm).unwrap();
        assert_eq!(inv, eq);
    }
}
