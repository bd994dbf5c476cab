//! Ground-truth features, noisy per-device observations, and a PCA fit for
//! ingesting external feature data.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClassModel;

/// One sensing event: the target's feature and every device's noisy view of it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    /// Class index in `1..=L`.
    pub label: usize,
    pub ground_truth: Vec<f64>,
    /// `observations[k] = ground_truth + d_k`.
    pub observations: Vec<Vec<f64>>,
}

impl FeatureSample {
    pub fn num_users(&self) -> usize {
        self.observations.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.ground_truth.len()
    }

    /// Ideal aggregate `Σ_k x̃_k`.
    pub fn ideal_sum(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.feature_dim()];
        for obs in &self.observations {
            for (acc, v) in y.iter_mut().zip(obs) {
                *acc += v;
            }
        }
        y
    }
}

/// Draws `x` from class `label` and `K` observations `x + d_k` with
/// `d_k ~ N(0, σ_r² I)`.
pub fn synthesize_sample<R: Rng + ?Sized>(
    class_model: &ClassModel,
    label: usize,
    sensing_noise_var: f64,
    num_users: usize,
    rng: &mut R,
) -> Result<FeatureSample> {
    let mean = class_model.mean(label)?;
    if !(sensing_noise_var >= 0.0) {
        return Err(Error::InvalidArgument(
            "sensing noise variance must be nonnegative".into(),
        ));
    }
    let ground_truth: Vec<f64> = mean
        .iter()
        .zip(class_model.covariance_diag())
        .map(|(&mu, &var)| mu + var.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let sd = sensing_noise_var.sqrt();
    let observations = (0..num_users)
        .map(|_| {
            ground_truth
                .iter()
                .map(|&x| {
                    if sd == 0.0 {
                        x
                    } else {
                        x + sd * rng.sample::<f64, _>(StandardNormal)
                    }
                })
                .collect()
        })
        .collect();
    Ok(FeatureSample {
        label,
        ground_truth,
        observations,
    })
}

/// Orthonormal projection from raw `F`-dimensional data onto `M` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    /// Sample mean removed before projecting.
    pub center: Vec<f64>,
    /// `F × M`, stored row-major (`projection[f][m]`).
    pub projection: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn raw_dim(&self) -> usize {
        self.projection.len()
    }

    pub fn num_components(&self) -> usize {
        self.explained_variance.len()
    }

    /// Component `m` as a length-`F` vector.
    pub fn component(&self, m: usize) -> Vec<f64> {
        self.projection.iter().map(|row| row[m]).collect()
    }

    /// `Uᵀ (r - center)`.
    pub fn project(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.raw_dim() {
            return Err(Error::DimensionMismatch(format!(
                "sample has {} entries, basis expects {}",
                raw.len(),
                self.raw_dim()
            )));
        }
        let mut out = vec![0.0; self.num_components()];
        for (f, row) in self.projection.iter().enumerate() {
            let v = raw[f] - self.center[f];
            for (o, u) in out.iter_mut().zip(row) {
                *o += u * v;
            }
        }
        Ok(out)
    }

    /// Largest deviation of `UᵀU` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.num_components();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let dot: f64 = self.projection.iter().map(|row| row[i] * row[j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Top-`M` principal components of `samples`.
///
/// Components come in descending eigenvalue order (ties keep the solver's
/// first occurrence) and each column is signed so that its largest-magnitude
/// entry is positive.
pub fn fit_pca(samples: &[Vec<f64>], num_components: usize) -> Result<PcaBasis> {
    let f = samples.first().map(Vec::len).unwrap_or(0);
    if num_components == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    if f == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if num_components > f {
        return Err(Error::InvalidArgument(format!(
            "{num_components} components requested from {f}-dimensional data"
        )));
    }
    if samples.len() < num_components {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot support {num_components} components",
            samples.len()
        )));
    }
    if samples.iter().any(|s| s.len() != f) {
        return Err(Error::DimensionMismatch("ragged sample matrix".into()));
    }

    let n = samples.len() as f64;
    let mut center = vec![0.0; f];
    for s in samples {
        for (c, v) in center.iter_mut().zip(s) {
            *c += v / n;
        }
    }
    let denom = if samples.len() > 1 { n - 1.0 } else { 1.0 };
    let mut cov = DMatrix::<f64>::zeros(f, f);
    for s in samples {
        for i in 0..f {
            let di = s[i] - center[i];
            for j in i..f {
                cov[(i, j)] += di * (s[j] - center[j]) / denom;
            }
        }
    }
    for i in 0..f {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = (f.max(samples.len()) as f64) * f64::EPSILON * top.max(f64::MIN_POSITIVE);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();
    if rank < num_components {
        return Err(Error::RankDeficient {
            requested: num_components,
            rank,
        });
    }

    let mut projection = vec![vec![0.0; num_components]; f];
    let mut explained_variance = Vec::with_capacity(num_components);
    for (m, &idx) in order.iter().take(num_components).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = col.iter().copied().fold(
            0.0f64,
            |best, v| if v.abs() > best.abs() { v } else { best },
        );
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (row, v) in projection.iter_mut().zip(col.iter()) {
            row[m] = sign * v;
        }
        explained_variance.push(eig.eigenvalues[idx]);
    }
    Ok(PcaBasis {
        center,
        projection,
        explained_variance,
    })
}

/// Reads a headerless numeric CSV (rows = samples, columns = raw dimensions).
pub fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!(
                        "{}: non-numeric field {field:?}",
                        path.display()
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
