//! Allocation schemes and the subcarrier mapping used by the simulator.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aircomp::Allocation;
use crate::baselines::{channel_inversion, equal_allocation};
use crate::classify::LinearClassifier;
use crate::error::{Error, Result};
use crate::fdm_opt::{comp_optimal_fdm, decision_optimal_fdm, FdmOptions};
use crate::model::{ChannelRealization, Multiplexing, Scenario, SecondMoments, SolverInstance};
use crate::tdm_opt::{comp_optimal_tdm_allocation, decision_optimal_tdm_allocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Minimizes the aggregation MSE.
    CompOpt,
    /// Maximizes the minimum inter-class Mahalanobis distance.
    DecisionOpt,
    Equal,
    Inversion,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::CompOpt,
        SchemeKind::DecisionOpt,
        SchemeKind::Equal,
        SchemeKind::Inversion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::CompOpt => "comp-opt",
            SchemeKind::DecisionOpt => "decision-opt",
            SchemeKind::Equal => "equal",
            SchemeKind::Inversion => "inversion",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme {s:?}")))
    }
}

/// Rule selecting which `M` of the `N` subcarriers carry the feature
/// elements when `N > M`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubcarrierMapping {
    /// Dimensions in decreasing `Δ²_min / σ²` order each take the unused
    /// subcarrier with the largest worst-user gain `min_k |h_{k,n}|`.
    #[default]
    Greedy,
    FirstM,
    /// A uniformly random set of `M` subcarriers in random order.
    Random,
}

/// Column `n` of the returned list carries feature element `n`.
pub fn map_subcarriers<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    moments: &SecondMoments,
    rule: SubcarrierMapping,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let (m, n) = (moments.feature_dim(), channels.num_columns());
    if n < m {
        return Err(Error::DimensionMismatch(format!(
            "{n} subcarriers cannot carry {m} feature elements"
        )));
    }
    Ok(match rule {
        SubcarrierMapping::FirstM => (0..m).collect(),
        SubcarrierMapping::Random => sample(rng, n, m).into_vec(),
        SubcarrierMapping::Greedy => {
            let mut dims: Vec<usize> = (0..m).collect();
            let score = |d: usize| moments.delta_min_sq[d] / moments.var_per_dim[d];
            dims.sort_by(|&a, &b| score(b).total_cmp(&score(a)));
            let worst: Vec<f64> = (0..n)
                .map(|c| {
                    channels
                        .column(c)
                        .iter()
                        .map(|h| h.norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let mut used = vec![false; n];
            let mut columns = vec![0; m];
            for d in dims {
                let mut best: Option<usize> = None;
                for c in (0..n).filter(|&c| !used[c]) {
                    if best.is_none_or(|b| worst[c] > worst[b]) {
                        best = Some(c);
                    }
                }
                let c = best.expect("n >= m leaves a free subcarrier");
                used[c] = true;
                columns[d] = c;
            }
            columns
        }
    })
}

/// Transmission and decision rules of one simulated scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub scheme: SchemeKind,
    pub fdm: FdmOptions,
    pub mapping: SubcarrierMapping,
    /// Replaces the MAP rule when set.
    pub classifier: Option<LinearClassifier>,
}

impl Policy {
    pub fn new(scheme: SchemeKind) -> Self {
        Policy {
            scheme,
            fdm: FdmOptions::default(),
            mapping: SubcarrierMapping::default(),
            classifier: None,
        }
    }
}

/// An allocation together with the channel columns it was designed for.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedAllocation {
    pub alloc: Allocation,
    /// `K × M` gains of the active columns.
    pub channels: ChannelRealization,
    /// Indices of the active columns in the full realization.
    pub columns: Vec<usize>,
    /// MSE or MD reported by the optimizer; `None` for baselines.
    pub objective: Option<f64>,
    pub converged: bool,
}

impl Policy {
    /// Allocates for one channel realization of `scenario` (`K × M` for TDM,
    /// `K × N` for FDM).
    pub fn allocate<R: Rng + ?Sized>(
        &self,
        scenario: &Scenario,
        moments: &SecondMoments,
        channels: &ChannelRealization,
        rng: &mut R,
    ) -> Result<PlannedAllocation> {
        let scheme = scenario.scheme();
        let columns = match scheme {
            Multiplexing::Tdm => (0..scenario.feature_dim()).collect(),
            Multiplexing::Fdm => map_subcarriers(channels, moments, self.mapping, rng)?,
        };
        let active = channels.select_columns(&columns);
        let budgets = scenario.power_budgets();
        let noise = scenario.channel_noise_var();
        let (alloc, objective, converged) = match (self.scheme, scheme) {
            (SchemeKind::Equal, _) => (
                equal_allocation(
                    &active,
                    budgets,
                    &moments.nu_sq,
                    &moments.var_per_dim,
                    noise,
                    scheme,
                )?,
                None,
                true,
            ),
            (SchemeKind::Inversion, _) => (
                channel_inversion(
                    &active,
                    budgets,
                    &moments.nu_sq,
                    &moments.var_per_dim,
                    noise,
                    scheme,
                )?,
                None,
                true,
            ),
            (kind, Multiplexing::Tdm) => {
                let inst = SolverInstance::new(active.clone(), budgets.to_vec(), moments, noise)?;
                let sol = if kind == SchemeKind::CompOpt {
                    comp_optimal_tdm_allocation(&inst)?
                } else {
                    decision_optimal_tdm_allocation(&inst)?
                };
                (sol.alloc, Some(sol.objective), true)
            }
            (kind, Multiplexing::Fdm) => {
                let inst = SolverInstance::new(active.clone(), budgets.to_vec(), moments, noise)?;
                let sol = if kind == SchemeKind::CompOpt {
                    comp_optimal_fdm(&inst, &self.fdm)?
                } else {
                    decision_optimal_fdm(&inst, &self.fdm)?
                };
                (sol.alloc, Some(sol.objective), sol.dual_state.converged)
            }
        };
        Ok(PlannedAllocation {
            alloc,
            channels: active,
            columns,
            objective,
            converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::second_moments;
    use crate::model::ClassModel;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scheme_names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
            assert_eq!(
                serde_json::to_string(&k).unwrap(),
                format!("\"{}\"", k.name())
            );
        }
        assert!("svm".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn greedy_gives_best_subcarrier_to_most_discriminative_dimension() {
        let cm = ClassModel::new(vec![vec![0.1, 1.0], vec![-0.1, -1.0]], vec![1.0, 1.0]).unwrap();
        let mom = second_moments(&cm, 0.0, 2).unwrap();
        let g = |x: f64| Complex64::new(x, 0.0);
        let ch = ChannelRealization::new(vec![
            vec![g(0.1), g(2.0), g(0.9), g(3.0)],
            vec![g(1.0), g(0.5), g(1.2), g(2.5)],
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cols = map_subcarriers(&ch, &mom, SubcarrierMapping::Greedy, &mut rng).unwrap();
        assert_eq!(cols, vec![2, 3]);
        let cols = map_subcarriers(&ch, &mom, SubcarrierMapping::FirstM, &mut rng).unwrap();
        assert_eq!(cols, vec![0, 1]);
        let cols = map_subcarriers(&ch, &mom, SubcarrierMapping::Random, &mut rng).unwrap();
        assert_eq!(cols.len(), 2);
        assert_ne!(cols[0], cols[1]);
    }
}
