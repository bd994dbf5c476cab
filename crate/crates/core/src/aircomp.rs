//! Over-the-air aggregation and the two proxy metrics: aggregation MSE and
//! per-dimension Mahalanobis distance of the received features.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cscg, ChannelRealization, ClassModel, Multiplexing, SecondMoments};
use crate::sensing::FeatureSample;

/// Relative slack allowed on every per-user power constraint.
pub const POWER_SLACK: f64 = 1e-6;

/// Transmit coefficients `b[k][n]` and receive coefficients `a[n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub transmit: Vec<Vec<Complex64>>,
    pub receive: Vec<Complex64>,
    pub scheme: Multiplexing,
}

impl Allocation {
    pub fn zeros(num_users: usize, dims: usize, scheme: Multiplexing) -> Self {
        Allocation {
            transmit: vec![vec![Complex64::new(0.0, 0.0); dims]; num_users],
            receive: vec![Complex64::new(0.0, 0.0); dims],
            scheme,
        }
    }

    pub fn num_users(&self) -> usize {
        self.transmit.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.receive.len()
    }

    /// `Σ_n |b_{k,n}|² ν²_{k,n}` for user `k`.
    pub fn power_used(&self, user: usize, nu_sq: &[Vec<f64>]) -> f64 {
        self.transmit[user]
            .iter()
            .zip(&nu_sq[user])
            .map(|(b, nu2)| b.norm_sqr() * nu2)
            .sum()
    }

    /// Per-user power use.
    pub fn power_profile(&self, nu_sq: &[Vec<f64>]) -> Vec<f64> {
        (0..self.num_users())
            .map(|k| self.power_used(k, nu_sq))
            .collect()
    }

    /// Every user within its budget up to [`POWER_SLACK`].
    pub fn is_power_feasible(&self, budgets: &[f64], nu_sq: &[Vec<f64>]) -> bool {
        self.power_profile(nu_sq)
            .iter()
            .zip(budgets)
            .all(|(used, p)| *used <= p * (1.0 + POWER_SLACK))
    }

    /// Effective gains `h_{k,n} b_{k,n}` on column `n`.
    pub fn effective_gains(&self, channels: &ChannelRealization, n: usize) -> Vec<Complex64> {
        (0..self.num_users())
            .map(|k| channels.gain(k, n) * self.transmit[k][n])
            .collect()
    }

    fn check_dims(&self, channels: &ChannelRealization, per_dim: usize) -> Result<()> {
        if channels.num_users() != self.num_users()
            || channels.num_columns() != self.feature_dim()
            || per_dim != self.feature_dim()
            || self
                .transmit
                .iter()
                .any(|row| row.len() != self.feature_dim())
        {
            return Err(Error::DimensionMismatch(format!(
                "allocation is {}x{}, channels {}x{}, statistics have {} dims",
                self.num_users(),
                self.feature_dim(),
                channels.num_users(),
                channels.num_columns(),
                per_dim
            )));
        }
        Ok(())
    }
}

/// Receive coefficient minimizing the per-column MSE for fixed effective gains.
pub fn mmse_receive(effective: &[Complex64], signal_var: f64, noise_var: f64) -> Complex64 {
    let num: Complex64 = effective.iter().map(|g| g.conj()).sum::<Complex64>() * signal_var;
    let den = signal_var * effective.iter().map(|g| g.norm_sqr()).sum::<f64>() + noise_var;
    if den > 0.0 {
        num / den
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Sets every receive coefficient to its MMSE value given the transmit side.
pub fn set_mmse_receive(
    alloc: &mut Allocation,
    channels: &ChannelRealization,
    var_per_dim: &[f64],
    noise_var: f64,
) {
    for n in 0..alloc.feature_dim() {
        let g = alloc.effective_gains(channels, n);
        alloc.receive[n] = mmse_receive(&g, var_per_dim[n], noise_var);
    }
}

/// Received aggregate `ŷ_n = a_n Σ_k h_{k,n} b_{k,n} x̃_{k,n} + a_n w_n`.
pub fn aggregate<R: Rng + ?Sized>(
    sample: &FeatureSample,
    channels: &ChannelRealization,
    alloc: &Allocation,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    alloc.check_dims(channels, sample.feature_dim())?;
    if sample.num_users() != alloc.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} observations for {} users",
            sample.num_users(),
            alloc.num_users()
        )));
    }
    let sd = noise_var.sqrt();
    Ok((0..alloc.feature_dim())
        .map(|n| {
            let superposed: Complex64 = (0..alloc.num_users())
                .map(|k| channels.gain(k, n) * alloc.transmit[k][n] * sample.observations[k][n])
                .sum();
            let w = if sd > 0.0 {
                cscg(rng) * sd
            } else {
                Complex64::new(0.0, 0.0)
            };
            alloc.receive[n] * (superposed + w)
        })
        .collect())
}

/// Per-dimension aggregation MSE
/// `σ_n² Σ_k |a_n h_{k,n} b_{k,n} - 1|² + |a_n|² σ_w²`.
pub fn mse_per_dim(
    alloc: &Allocation,
    channels: &ChannelRealization,
    var_per_dim: &[f64],
    noise_var: f64,
) -> Result<Vec<f64>> {
    alloc.check_dims(channels, var_per_dim.len())?;
    Ok((0..alloc.feature_dim())
        .map(|n| {
            let a = alloc.receive[n];
            let misalign: f64 = alloc
                .effective_gains(channels, n)
                .iter()
                .map(|g| (a * g - 1.0).norm_sqr())
                .sum();
            var_per_dim[n] * misalign + a.norm_sqr() * noise_var
        })
        .collect())
}

pub fn mse_total(
    alloc: &Allocation,
    channels: &ChannelRealization,
    var_per_dim: &[f64],
    noise_var: f64,
) -> Result<f64> {
    Ok(mse_per_dim(alloc, channels, var_per_dim, noise_var)?
        .iter()
        .sum())
}

/// Minimum inter-class Mahalanobis distance of each received element,
/// `|Σ_k h b|² Δ²_min / (σ² Σ_k |h b|² + σ_w²)`. Does not depend on `a`.
pub fn md_per_dim(
    alloc: &Allocation,
    channels: &ChannelRealization,
    delta_min_sq: &[f64],
    var_per_dim: &[f64],
    noise_var: f64,
) -> Result<Vec<f64>> {
    alloc.check_dims(channels, var_per_dim.len())?;
    if delta_min_sq.len() != var_per_dim.len() {
        return Err(Error::DimensionMismatch("delta_min_sq length".into()));
    }
    Ok((0..alloc.feature_dim())
        .map(|n| {
            let g = alloc.effective_gains(channels, n);
            let coherent = g.iter().sum::<Complex64>().norm_sqr();
            let den = var_per_dim[n] * g.iter().map(|x| x.norm_sqr()).sum::<f64>() + noise_var;
            if den > 0.0 {
                coherent * delta_min_sq[n] / den
            } else {
                0.0
            }
        })
        .collect())
}

pub fn md_total(
    alloc: &Allocation,
    channels: &ChannelRealization,
    delta_min_sq: &[f64],
    var_per_dim: &[f64],
    noise_var: f64,
) -> Result<f64> {
    Ok(
        md_per_dim(alloc, channels, delta_min_sq, var_per_dim, noise_var)?
            .iter()
            .sum(),
    )
}

/// Both proxies of one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyReport {
    pub mse_total: f64,
    pub mse_per_dim: Vec<f64>,
    pub md_total: f64,
    pub md_per_dim: Vec<f64>,
}

impl ProxyReport {
    pub fn evaluate(
        alloc: &Allocation,
        channels: &ChannelRealization,
        moments: &SecondMoments,
        noise_var: f64,
    ) -> Result<Self> {
        let mse = mse_per_dim(alloc, channels, &moments.var_per_dim, noise_var)?;
        let md = md_per_dim(
            alloc,
            channels,
            &moments.delta_min_sq,
            &moments.var_per_dim,
            noise_var,
        )?;
        Ok(ProxyReport {
            mse_total: mse.iter().sum(),
            mse_per_dim: mse,
            md_total: md.iter().sum(),
            md_per_dim: md,
        })
    }
}

/// Exact `E‖ŷ − y‖²` when every device observes the same target.
///
/// Unlike [`mse_total`], this accounts for the common component `x` shared by
/// all observations and its nonzero mean:
/// `|Σ_k (a g_k − 1)|² E[x_n²] + σ_r² Σ_k |a g_k − 1|² + |a|² σ_w²`.
pub fn common_target_mse(
    alloc: &Allocation,
    channels: &ChannelRealization,
    class_model: &ClassModel,
    sensing_noise_var: f64,
    noise_var: f64,
) -> Result<f64> {
    alloc.check_dims(channels, class_model.feature_dim())?;
    let l = class_model.num_classes() as f64;
    let mut total = 0.0;
    for n in 0..alloc.feature_dim() {
        let second = class_model
            .means()
            .iter()
            .map(|mu| mu[n] * mu[n])
            .sum::<f64>()
            / l
            + class_model.covariance_diag()[n];
        let a = alloc.receive[n];
        let errs: Vec<Complex64> = alloc
            .effective_gains(channels, n)
            .iter()
            .map(|g| a * g - 1.0)
            .collect();
        total += errs.iter().sum::<Complex64>().norm_sqr() * second
            + sensing_noise_var * errs.iter().map(|e| e.norm_sqr()).sum::<f64>()
            + a.norm_sqr() * noise_var;
    }
    Ok(total)
}

/// Mahalanobis distance between classes `i` and `j` (1-based) on dimension `m`.
pub fn pairwise_md_dim(class_model: &ClassModel, i: usize, j: usize, m: usize) -> Result<f64> {
    let (mi, mj) = (class_model.mean(i)?, class_model.mean(j)?);
    if m >= class_model.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimension {m} out of range"
        )));
    }
    let d = mi[m] - mj[m];
    Ok(d * d / class_model.covariance_diag()[m])
}

/// `(μ_i − μ_j)ᵀ Σ⁻¹ (μ_i − μ_j)`, the sum of the per-dimension distances.
pub fn pairwise_md(class_model: &ClassModel, i: usize, j: usize) -> Result<f64> {
    (0..class_model.feature_dim())
        .map(|m| pairwise_md_dim(class_model, i, j, m))
        .sum()
}

/// Minimum pairwise distance and the (1-based) pair attaining it.
pub fn min_pairwise_md(class_model: &ClassModel) -> (f64, (usize, usize)) {
    let l = class_model.num_classes();
    let mut best = (f64::INFINITY, (1, 2));
    for i in 1..=l {
        for j in (i + 1)..=l {
            let g = pairwise_md(class_model, i, j).expect("labels in range");
            if g < best.0 {
                best = (g, (i, j));
            }
        }
    }
    best
}

/// Margin-based lower bound on accuracy, `max(0, A_0 (1 − E‖e‖²/γ²))`.
pub fn markov_accuracy_bound(
    expected_err: f64,
    margin: f64,
    noise_free_accuracy: f64,
) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument("margin must be positive".into()));
    }
    if !(expected_err >= 0.0) || !(0.0..=1.0).contains(&noise_free_accuracy) {
        return Err(Error::InvalidArgument(
            "expected error must be nonnegative and A_0 in [0, 1]".into(),
        ));
    }
    Ok((noise_free_accuracy * (1.0 - expected_err / (margin * margin))).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn perfect_alignment_leaves_only_noise() {
        let h = vec![c(0.5, 0.5), c(-1.0, 2.0)];
        let ch = ChannelRealization::flat(&h, 2);
        let alloc = Allocation {
            transmit: h.iter().map(|g| vec![g.inv(); 2]).collect(),
            receive: vec![c(1.0, 0.0); 2],
            scheme: Multiplexing::Tdm,
        };
        let mse = mse_per_dim(&alloc, &ch, &[3.0, 0.7], 0.25).unwrap();
        assert!((mse[0] - 0.25).abs() < 1e-12 && (mse[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_receive_gives_full_misalignment() {
        let ch = ChannelRealization::flat(&[c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0)], 1);
        let mut alloc = Allocation::zeros(3, 1, Multiplexing::Tdm);
        alloc.transmit[0][0] = c(0.3, 0.1);
        let mse = mse_total(&alloc, &ch, &[0.4], 1.0).unwrap();
        assert!((mse - 3.0 * 0.4).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_hand_expansion() {
        // K = 3, M = 2; expand |a h b - 1|^2 by real and imaginary parts
        let h = vec![
            vec![c(0.3, -1.1), c(0.9, 0.2)],
            vec![c(-0.4, 0.5), c(0.1, 0.1)],
            vec![c(1.5, 0.0), c(-0.7, -0.8)],
        ];
        let b = vec![
            vec![c(0.2, 0.4), c(1.0, -0.3)],
            vec![c(-0.6, 0.0), c(0.5, 0.5)],
            vec![c(0.1, -0.9), c(0.0, 1.2)],
        ];
        let a = vec![c(0.8, -0.2), c(0.3, 0.6)];
        let var = [0.7, 1.3];
        let noise = 0.2;
        let ch = ChannelRealization::new(h.clone()).unwrap();
        let alloc = Allocation {
            transmit: b.clone(),
            receive: a.clone(),
            scheme: Multiplexing::Fdm,
        };
        let got = mse_total(&alloc, &ch, &var, noise).unwrap();
        let mut expected = 0.0;
        for n in 0..2 {
            let mut s = 0.0;
            for k in 0..3 {
                let (hr, hi) = (h[k][n].re, h[k][n].im);
                let (br, bi) = (b[k][n].re, b[k][n].im);
                let (ar, ai) = (a[n].re, a[n].im);
                let hbr = hr * br - hi * bi;
                let hbi = hr * bi + hi * br;
                let pr = ar * hbr - ai * hbi - 1.0;
                let pi = ar * hbi + ai * hbr;
                s += pr * pr + pi * pi;
            }
            expected += var[n] * s + (a[n].re * a[n].re + a[n].im * a[n].im) * noise;
        }
        assert!((got - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn single_user_noiseless_md_cancels_channel() {
        let ch = ChannelRealization::flat(&[c(0.3, -2.0)], 1);
        let alloc = Allocation {
            transmit: vec![vec![c(5.0, 1.0)]],
            receive: vec![c(1.0, 0.0)],
            scheme: Multiplexing::Tdm,
        };
        let g = md_per_dim(&alloc, &ch, &[2.5], &[0.5], 0.0).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn md_two_user_substitution() {
        let ch = ChannelRealization::flat(&[c(1.0, 0.0), c(1.0, 0.0)], 1);
        let alloc = Allocation {
            transmit: vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]],
            receive: vec![c(1.0, 0.0)],
            scheme: Multiplexing::Tdm,
        };
        let g = md_per_dim(&alloc, &ch, &[1.0], &[1.0], 1.0).unwrap();
        assert!((g[0] - 4.0 / 3.0).abs() < 1e-15);
        let zero = Allocation::zeros(2, 1, Multiplexing::Tdm);
        assert_eq!(md_per_dim(&zero, &ch, &[1.0], &[1.0], 1.0).unwrap()[0], 0.0);
    }

    #[test]
    fn md_independent_of_receive_and_common_phase() {
        let ch = ChannelRealization::new(vec![
            vec![c(0.3, -1.1), c(0.9, 0.2)],
            vec![c(-0.4, 0.5), c(0.1, 0.1)],
        ])
        .unwrap();
        let mut alloc = Allocation {
            transmit: vec![
                vec![c(0.2, 0.4), c(1.0, -0.3)],
                vec![c(-0.6, 0.0), c(0.5, 0.5)],
            ],
            receive: vec![c(0.8, -0.2), c(0.3, 0.6)],
            scheme: Multiplexing::Fdm,
        };
        let base = md_per_dim(&alloc, &ch, &[1.0, 0.5], &[0.3, 0.2], 0.1).unwrap();
        alloc.receive = vec![c(-7.0, 2.0), c(0.0, 0.0)];
        assert_eq!(
            md_per_dim(&alloc, &ch, &[1.0, 0.5], &[0.3, 0.2], 0.1).unwrap(),
            base
        );
        let rot = Complex64::from_polar(1.0, 0.77);
        for row in alloc.transmit.iter_mut() {
            row[1] *= rot;
        }
        let rotated = md_per_dim(&alloc, &ch, &[1.0, 0.5], &[0.3, 0.2], 0.1).unwrap();
        assert!((rotated[1] - base[1]).abs() < 1e-14);
    }

    #[test]
    fn aggregation_ideal_sum_and_pure_noise() {
        let cm = ClassModel::default_four_class();
        let mut rng = stream_rng(3, 0);
        let sample = crate::sensing::synthesize_sample(&cm, 3, 0.1, 2, &mut rng).unwrap();
        let h = vec![c(0.4, 0.9), c(-1.2, 0.3)];
        let ch = ChannelRealization::flat(&h, 4);
        let alloc = Allocation {
            transmit: h.iter().map(|g| vec![g.inv(); 4]).collect(),
            receive: vec![c(1.0, 0.0); 4],
            scheme: Multiplexing::Tdm,
        };
        let y = aggregate(&sample, &ch, &alloc, 0.0, &mut rng).unwrap();
        for (got, want) in y.iter().zip(sample.ideal_sum()) {
            assert!((got - want).norm() < 1e-12);
        }

        let mut silent = Allocation::zeros(2, 4, Multiplexing::Tdm);
        silent.receive = vec![c(2.0, 0.0); 4];
        let draws = 20_000;
        let mut acc = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        for _ in 0..draws {
            let y = aggregate(&sample, &ch, &silent, 0.5, &mut rng).unwrap();
            acc += y[0].norm_sqr();
            mean += y[0];
        }
        let var = acc / draws as f64;
        assert!((var - 4.0 * 0.5).abs() < 0.05 * 2.0);
        assert!((mean / draws as f64).norm() < 0.05);
    }

    #[test]
    fn pairwise_distances() {
        let same = ClassModel::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(pairwise_md(&same, 1, 2).unwrap(), 0.0);
        let pm = ClassModel::new(vec![vec![1.0], vec![-1.0]], vec![1.0]).unwrap();
        assert_eq!(pairwise_md(&pm, 1, 2).unwrap(), 4.0);
        assert!(pairwise_md(&pm, 1, 3).is_err());
    }

    #[test]
    fn markov_bound_edges() {
        assert_eq!(markov_accuracy_bound(0.0, 2.0, 0.9).unwrap(), 0.9);
        assert_eq!(markov_accuracy_bound(4.0, 2.0, 0.9).unwrap(), 0.0);
        assert_eq!(markov_accuracy_bound(9.0, 2.0, 0.9).unwrap(), 0.0);
        assert!(markov_accuracy_bound(1.0, 0.0, 0.9).is_err());
    }

    #[test]
    fn mmse_receive_is_stationary() {
        let g = vec![c(0.4, 0.2), c(-0.3, 1.0), c(0.9, -0.1)];
        let a = mmse_receive(&g, 0.8, 0.3);
        let f = |a: Complex64| {
            0.8 * g.iter().map(|x| (a * x - 1.0).norm_sqr()).sum::<f64>() + 0.3 * a.norm_sqr()
        };
        let base = f(a);
        for d in [c(1e-4, 0.0), c(-1e-4, 0.0), c(0.0, 1e-4), c(0.0, -1e-4)] {
            assert!(f(a + d) >= base);
        }
    }
}
