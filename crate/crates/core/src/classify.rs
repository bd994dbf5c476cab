//! MAP classification of the aggregated feature and Monte-Carlo accuracy.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aircomp::{aggregate, ProxyReport};
use crate::error::{Error, Result};
use crate::model::{sample_channels, second_moments, ClassModel, Scenario};
use crate::policy::Policy;
use crate::rng::{stream_id, stream_rng};
use crate::sensing::synthesize_sample;

/// Outcome of one classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Predicted class in `1..=L`.
    pub label: usize,
    pub log_likelihoods: Vec<f64>,
}

/// Index (1-based) of the largest score; the smallest index wins ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best + 1
}

/// MAP decision on `Re(ŷ) / K` under Gaussian class likelihoods with
/// per-dimension variance `σ_m² + σ_r² / K` and uniform priors.
///
/// Log-likelihoods omit the class-independent normalizing constant.
pub fn map_classify(
    received: &[Complex64],
    class_model: &ClassModel,
    num_users: usize,
    sensing_noise_var: f64,
) -> Result<Decision> {
    if received.len() != class_model.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "received {} elements for a {}-dimensional model",
            received.len(),
            class_model.feature_dim()
        )));
    }
    if num_users == 0 {
        return Err(Error::InvalidArgument("num_users must be positive".into()));
    }
    let k = num_users as f64;
    let var: Vec<f64> = class_model
        .covariance_diag()
        .iter()
        .map(|s| s + sensing_noise_var / k)
        .collect();
    let z: Vec<f64> = received.iter().map(|y| y.re / k).collect();
    let log_likelihoods: Vec<f64> = class_model
        .means()
        .iter()
        .map(|mu| {
            -0.5 * z
                .iter()
                .zip(mu)
                .zip(&var)
                .map(|((z, m), v)| (z - m) * (z - m) / v)
                .sum::<f64>()
        })
        .collect();
    Ok(Decision {
        label: argmax(&log_likelihoods),
        log_likelihoods,
    })
}

/// Affine classifier `argmax_ℓ (w_ℓ · z + c_ℓ)` on `z = Re(ŷ) / K`, for
/// parity experiments with externally trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// One weight row per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearClassifier {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: LinearClassifier = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.weights.first().map(Vec::len).unwrap_or(0);
        if self.weights.len() < 2 || self.weights.len() != self.biases.len() || dim == 0 {
            return Err(Error::InvalidArgument(
                "linear classifier needs at least two classes and one bias per class".into(),
            ));
        }
        if self.weights.iter().any(|w| w.len() != dim) {
            return Err(Error::InvalidArgument("ragged classifier weights".into()));
        }
        Ok(())
    }

    pub fn classify(&self, received: &[Complex64], num_users: usize) -> Result<Decision> {
        if received.len() != self.weights[0].len() {
            return Err(Error::DimensionMismatch(format!(
                "received {} elements for a {}-dimensional classifier",
                received.len(),
                self.weights[0].len()
            )));
        }
        let k = num_users as f64;
        let scores: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, c)| {
                w.iter()
                    .zip(received)
                    .map(|(w, y)| w * y.re / k)
                    .sum::<f64>()
                    + c
            })
            .collect();
        Ok(Decision {
            label: argmax(&scores),
            log_likelihoods: scores,
        })
    }
}

/// Monte-Carlo estimate for one scheme at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub accuracy: f64,
    /// Binomial standard error `√(p (1 − p) / T)`.
    pub stderr: f64,
    pub trials: usize,
    /// Mean aggregation MSE of the allocations used.
    pub mean_mse: f64,
    /// Mean Mahalanobis distance of the allocations used.
    pub mean_md: f64,
    /// Trials whose allocator reported non-convergence.
    pub nonconverged: usize,
    /// Trials whose allocation broke a power budget.
    pub infeasible: usize,
}

struct TrialOutcome {
    correct: bool,
    mse: f64,
    md: f64,
    converged: bool,
    feasible: bool,
}

/// Accuracy of `policy` on `scenario`.
///
/// Trial `t` draws the label, features, sensing noise, a fresh channel
/// realization and the channel noise from stream `stream_id(point, t)`
/// under the scenario seed, so every scheme evaluated at the same point
/// sees the same randomness.
pub fn estimate_accuracy(
    scenario: &Scenario,
    class_model: &ClassModel,
    policy: &Policy,
    num_trials: usize,
    point: usize,
) -> Result<AccuracyEstimate> {
    if num_trials == 0 {
        return Err(Error::InvalidArgument("num_trials must be positive".into()));
    }
    if class_model.feature_dim() != scenario.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "class model has {} dims, scenario {}",
            class_model.feature_dim(),
            scenario.feature_dim()
        )));
    }
    let k = scenario.num_users();
    let moments = second_moments(class_model, scenario.sensing_noise_var(), k)?;
    let outcomes = (0..num_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(scenario.seed(), stream_id(point, t));
            let label = rng.random_range(1..=class_model.num_classes());
            let sample = synthesize_sample(
                class_model,
                label,
                scenario.sensing_noise_var(),
                k,
                &mut rng,
            )?;
            let channels = sample_channels(scenario, &mut rng);
            let planned = policy.allocate(scenario, &moments, &channels, &mut rng)?;
            let active = &planned.channels;
            let received = aggregate(
                &sample,
                active,
                &planned.alloc,
                scenario.channel_noise_var(),
                &mut rng,
            )?;
            let decision = match &policy.classifier {
                Some(linear) => linear.classify(&received, k)?,
                None => map_classify(&received, class_model, k, scenario.sensing_noise_var())?,
            };
            let proxies = ProxyReport::evaluate(
                &planned.alloc,
                active,
                &moments,
                scenario.channel_noise_var(),
            )?;
            Ok(TrialOutcome {
                correct: decision.label == label,
                mse: proxies.mse_total,
                md: proxies.md_total,
                converged: planned.converged,
                feasible: planned
                    .alloc
                    .is_power_feasible(scenario.power_budgets(), &moments.nu_sq),
            })
        })
        .collect::<Result<Vec<TrialOutcome>>>()?;

    let t = num_trials as f64;
    let correct = outcomes.iter().filter(|o| o.correct).count() as f64;
    let p = correct / t;
    Ok(AccuracyEstimate {
        accuracy: p,
        stderr: (p * (1.0 - p) / t).sqrt(),
        trials: num_trials,
        mean_mse: outcomes.iter().map(|o| o.mse).sum::<f64>() / t,
        mean_md: outcomes.iter().map(|o| o.md).sum::<f64>() / t,
        nonconverged: outcomes.iter().filter(|o| !o.converged).count(),
        infeasible: outcomes.iter().filter(|o| !o.feasible).count(),
    })
}

/// Accuracy `A_0` of classifying the ideal average `Σ_k x̃_k / K` (no
/// channel distortion), with its binomial standard error.
pub fn noise_free_accuracy(
    class_model: &ClassModel,
    sensing_noise_var: f64,
    num_users: usize,
    num_trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if num_trials == 0 {
        return Err(Error::InvalidArgument("num_trials must be positive".into()));
    }
    let hits = (0..num_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let label = rng.random_range(1..=class_model.num_classes());
            let sample =
                synthesize_sample(class_model, label, sensing_noise_var, num_users, &mut rng)?;
            let y: Vec<Complex64> = sample
                .ideal_sum()
                .into_iter()
                .map(|v| Complex64::new(v, 0.0))
                .collect();
            Ok(map_classify(&y, class_model, num_users, sensing_noise_var)?.label == label)
        })
        .collect::<Result<Vec<bool>>>()?;
    let p = hits.iter().filter(|h| **h).count() as f64 / num_trials as f64;
    Ok((p, (p * (1.0 - p) / num_trials as f64).sqrt()))
}
