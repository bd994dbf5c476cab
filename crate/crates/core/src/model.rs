//! Statistical parameters of the system and the second-order quantities
//! every solver consumes.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian class components sharing one diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassModelDoc", into = "ClassModelDoc")]
pub struct ClassModel {
    means: Vec<Vec<f64>>,
    covariance_diag: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ClassModelDoc {
    #[serde(default)]
    num_classes: Option<usize>,
    means: Vec<Vec<f64>>,
    covariance_diag: Vec<f64>,
}

impl TryFrom<ClassModelDoc> for ClassModel {
    type Error = Error;

    fn try_from(doc: ClassModelDoc) -> Result<Self> {
        if let Some(l) = doc.num_classes {
            if l != doc.means.len() {
                return Err(Error::InvalidClassModel(format!(
                    "num_classes = {l} but {} mean vectors given",
                    doc.means.len()
                )));
            }
        }
        ClassModel::new(doc.means, doc.covariance_diag)
    }
}

impl From<ClassModel> for ClassModelDoc {
    fn from(m: ClassModel) -> Self {
        ClassModelDoc {
            num_classes: Some(m.means.len()),
            means: m.means,
            covariance_diag: m.covariance_diag,
        }
    }
}

impl ClassModel {
    pub fn new(means: Vec<Vec<f64>>, covariance_diag: Vec<f64>) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidClassModel(format!(
                "need at least two classes, got {}",
                means.len()
            )));
        }
        let m = covariance_diag.len();
        if m == 0 {
            return Err(Error::InvalidClassModel("feature dimension is zero".into()));
        }
        if let Some((i, _)) = means.iter().enumerate().find(|(_, mu)| mu.len() != m) {
            return Err(Error::InvalidClassModel(format!(
                "mean vector {i} has length {} but covariance has {m} entries",
                means[i].len()
            )));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidClassModel("non-finite mean entry".into()));
        }
        if covariance_diag.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidClassModel(
                "covariance entries must be positive and finite".into(),
            ));
        }
        Ok(ClassModel {
            means,
            covariance_diag,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.covariance_diag.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Mean vector of class `label` (1-based).
    pub fn mean(&self, label: usize) -> Result<&[f64]> {
        self.check_label(label)?;
        Ok(&self.means[label - 1])
    }

    pub fn covariance_diag(&self) -> &[f64] {
        &self.covariance_diag
    }

    pub(crate) fn check_label(&self, label: usize) -> Result<()> {
        if label == 0 || label > self.num_classes() {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Minimum over class pairs of the squared mean difference in dimension `m`.
    pub fn delta_min_sq(&self, m: usize) -> f64 {
        let l = self.num_classes();
        let mut best = f64::INFINITY;
        for i in 0..l {
            for j in (i + 1)..l {
                let d = self.means[i][m] - self.means[j][m];
                best = best.min(d * d);
            }
        }
        best
    }

    /// Default four-class, four-dimensional model.
    ///
    /// Every dimension places the four classes on equally spaced levels
    /// (a different permutation per dimension), so each dimension separates
    /// every pair; the spacing shrinks across dimensions. All means share the
    /// common component [`DEFAULT_OFFSET`]. The constants come from
    /// `examples/tune_class_model.rs`.
    pub fn default_four_class() -> Self {
        const LEVELS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];
        const PERMS: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 3, 0, 2], [2, 0, 3, 1], [3, 2, 1, 0]];
        let spacing = DEFAULT_SPACING;
        let means = (0..4)
            .map(|class| {
                (0..4)
                    .map(|m| DEFAULT_OFFSET + spacing[m] * LEVELS[PERMS[m][class]])
                    .collect()
            })
            .collect();
        ClassModel::new(means, vec![DEFAULT_FEATURE_VAR; 4]).expect("default model is valid")
    }
}

/// Per-dimension level spacing of [`ClassModel::default_four_class`].
pub const DEFAULT_SPACING: [f64; 4] = [0.45, 0.35, 0.25, 0.15];
/// Class-independent component shared by every mean.
pub const DEFAULT_OFFSET: f64 = 2.0;
/// Per-dimension class-conditional variance of [`ClassModel::default_four_class`].
pub const DEFAULT_FEATURE_VAR: f64 = 0.02;

/// Multiplexing of feature elements within one coherence block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplexing {
    #[serde(alias = "TDM")]
    Tdm,
    #[serde(alias = "FDM")]
    Fdm,
}

/// System parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDoc", into = "ScenarioDoc")]
pub struct Scenario {
    num_users: usize,
    feature_dim: usize,
    num_subcarriers: usize,
    sensing_noise_var: f64,
    channel_noise_var: f64,
    power_budgets: Vec<f64>,
    scheme: Multiplexing,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ScenarioDoc {
    num_users: usize,
    feature_dim: usize,
    #[serde(default)]
    num_subcarriers: Option<usize>,
    sensing_noise_var: f64,
    channel_noise_var: f64,
    power_budgets: Vec<f64>,
    scheme: Multiplexing,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<ScenarioDoc> for Scenario {
    type Error = Error;

    fn try_from(d: ScenarioDoc) -> Result<Self> {
        Scenario::new(
            d.num_users,
            d.feature_dim,
            d.num_subcarriers.unwrap_or(d.feature_dim),
            d.sensing_noise_var,
            d.channel_noise_var,
            d.power_budgets,
            d.scheme,
            d.seed,
        )
    }
}

impl From<Scenario> for ScenarioDoc {
    fn from(s: Scenario) -> Self {
        ScenarioDoc {
            num_users: s.num_users,
            feature_dim: s.feature_dim,
            num_subcarriers: Some(s.num_subcarriers),
            sensing_noise_var: s.sensing_noise_var,
            channel_noise_var: s.channel_noise_var,
            power_budgets: s.power_budgets,
            scheme: s.scheme,
            seed: s.seed,
        }
    }
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_users: usize,
        feature_dim: usize,
        num_subcarriers: usize,
        sensing_noise_var: f64,
        channel_noise_var: f64,
        power_budgets: Vec<f64>,
        scheme: Multiplexing,
        seed: u64,
    ) -> Result<Self> {
        if num_users == 0 || feature_dim == 0 {
            return Err(Error::InvalidScenario(
                "num_users and feature_dim must be positive".into(),
            ));
        }
        if scheme == Multiplexing::Fdm && num_subcarriers < feature_dim {
            return Err(Error::InvalidScenario(format!(
                "FDM needs num_subcarriers >= feature_dim ({num_subcarriers} < {feature_dim})"
            )));
        }
        if power_budgets.len() != num_users {
            return Err(Error::InvalidScenario(format!(
                "{} power budgets for {num_users} users",
                power_budgets.len()
            )));
        }
        if power_budgets.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidScenario(
                "power budgets must be positive".into(),
            ));
        }
        if !(channel_noise_var > 0.0 && channel_noise_var.is_finite()) {
            return Err(Error::InvalidScenario(
                "channel_noise_var must be positive".into(),
            ));
        }
        if !(sensing_noise_var >= 0.0 && sensing_noise_var.is_finite()) {
            return Err(Error::InvalidScenario(
                "sensing_noise_var must be nonnegative".into(),
            ));
        }
        Ok(Scenario {
            num_users,
            feature_dim,
            num_subcarriers,
            sensing_noise_var,
            channel_noise_var,
            power_budgets,
            scheme,
            seed,
        })
    }

    /// Equal per-user budgets set from an SNR `P_k / σ_w²` in dB.
    #[allow(clippy::too_many_arguments)]
    pub fn with_snr_db(
        num_users: usize,
        feature_dim: usize,
        num_subcarriers: usize,
        sensing_noise_var: f64,
        channel_noise_var: f64,
        snr_db: f64,
        scheme: Multiplexing,
        seed: u64,
    ) -> Result<Self> {
        let p = snr_db_to_power(snr_db, channel_noise_var);
        Scenario::new(
            num_users,
            feature_dim,
            num_subcarriers,
            sensing_noise_var,
            channel_noise_var,
            vec![p; num_users],
            scheme,
            seed,
        )
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }
    pub fn sensing_noise_var(&self) -> f64 {
        self.sensing_noise_var
    }
    pub fn channel_noise_var(&self) -> f64 {
        self.channel_noise_var
    }
    pub fn power_budgets(&self) -> &[f64] {
        &self.power_budgets
    }
    pub fn scheme(&self) -> Multiplexing {
        self.scheme
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    /// Copy with every user's budget reset from an SNR in dB.
    pub fn at_snr_db(&self, snr_db: f64) -> Self {
        let p = snr_db_to_power(snr_db, self.channel_noise_var);
        Scenario {
            power_budgets: vec![p; self.num_users],
            ..self.clone()
        }
    }

    /// Copy with `num_users` users, all at the first user's budget.
    pub fn with_num_users(&self, num_users: usize) -> Result<Self> {
        Scenario::new(
            num_users,
            self.feature_dim,
            self.num_subcarriers,
            self.sensing_noise_var,
            self.channel_noise_var,
            vec![self.power_budgets[0]; num_users],
            self.scheme,
            self.seed,
        )
    }

    pub fn with_num_subcarriers(&self, num_subcarriers: usize) -> Result<Self> {
        Scenario::new(
            self.num_users,
            self.feature_dim,
            num_subcarriers,
            self.sensing_noise_var,
            self.channel_noise_var,
            self.power_budgets.clone(),
            self.scheme,
            self.seed,
        )
    }

    pub fn with_scheme(&self, scheme: Multiplexing) -> Result<Self> {
        Scenario::new(
            self.num_users,
            self.feature_dim,
            self.num_subcarriers,
            self.sensing_noise_var,
            self.channel_noise_var,
            self.power_budgets.clone(),
            scheme,
            self.seed,
        )
    }

    /// Number of channel columns drawn per realization: `M` slots for TDM,
    /// `N` subcarriers for FDM.
    pub fn num_channel_columns(&self) -> usize {
        match self.scheme {
            Multiplexing::Tdm => self.feature_dim,
            Multiplexing::Fdm => self.num_subcarriers,
        }
    }
}

pub fn snr_db_to_power(snr_db: f64, channel_noise_var: f64) -> f64 {
    channel_noise_var * 10f64.powf(snr_db / 10.0)
}

/// Complex gains `h[k][n]` per user and slot/subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    gains: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    pub fn new(gains: Vec<Vec<Complex64>>) -> Result<Self> {
        let cols = gains.first().map(Vec::len).unwrap_or(0);
        if gains.is_empty() || cols == 0 {
            return Err(Error::DimensionMismatch("empty channel matrix".into()));
        }
        if gains.iter().any(|row| row.len() != cols) {
            return Err(Error::DimensionMismatch("ragged channel matrix".into()));
        }
        Ok(ChannelRealization { gains })
    }

    /// Slow-fading realization: one gain per user repeated over `slots`.
    pub fn flat(per_user: &[Complex64], slots: usize) -> Self {
        ChannelRealization {
            gains: per_user.iter().map(|&h| vec![h; slots]).collect(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.gains.len()
    }

    pub fn num_columns(&self) -> usize {
        self.gains[0].len()
    }

    pub fn gain(&self, user: usize, column: usize) -> Complex64 {
        self.gains[user][column]
    }

    pub fn gains(&self) -> &[Vec<Complex64>] {
        &self.gains
    }

    /// Gains of all users on one column.
    pub fn column(&self, column: usize) -> Vec<Complex64> {
        self.gains.iter().map(|row| row[column]).collect()
    }

    /// Sub-realization keeping `columns` in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        ChannelRealization {
            gains: self
                .gains
                .iter()
                .map(|row| columns.iter().map(|&c| row[c]).collect())
                .collect(),
        }
    }

    /// True when each user's gain is identical across columns.
    pub fn is_slow_fading(&self) -> bool {
        self.gains
            .iter()
            .all(|row| row.iter().all(|&h| h == row[0]))
    }
}

/// Draws unit-variance circularly-symmetric complex Gaussian gains.
///
/// TDM scenarios draw one gain per user and replicate it over the `M`
/// slots; FDM scenarios draw an independent gain for each of the `N`
/// subcarriers.
pub fn sample_channels<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> ChannelRealization {
    let k = scenario.num_users();
    match scenario.scheme() {
        Multiplexing::Tdm => {
            let per_user: Vec<Complex64> = (0..k).map(|_| cscg(rng)).collect();
            ChannelRealization::flat(&per_user, scenario.feature_dim())
        }
        Multiplexing::Fdm => ChannelRealization {
            gains: (0..k)
                .map(|_| (0..scenario.num_subcarriers()).map(|_| cscg(rng)).collect())
                .collect(),
        },
    }
}

/// One draw of CN(0, 1).
pub(crate) fn cscg<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Second-order statistics of the transmitted features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMoments {
    /// `ν²[k][m] = E|x̃_{k,m}|²`.
    pub nu_sq: Vec<Vec<f64>>,
    /// Minimum squared class-mean gap per dimension.
    pub delta_min_sq: Vec<f64>,
    /// `σ_m² + σ_r²`.
    pub var_per_dim: Vec<f64>,
}

impl SecondMoments {
    pub fn feature_dim(&self) -> usize {
        self.var_per_dim.len()
    }

    pub fn num_users(&self) -> usize {
        self.nu_sq.len()
    }

    /// Per-user `ν` (not squared) on dimension `m`.
    pub fn nu_column(&self, m: usize) -> Vec<f64> {
        self.nu_sq.iter().map(|row| row[m].sqrt()).collect()
    }
}

/// Exact mixture second moment per dimension, replicated over `num_users`.
pub fn second_moments(
    class_model: &ClassModel,
    sensing_noise_var: f64,
    num_users: usize,
) -> Result<SecondMoments> {
    if !(sensing_noise_var >= 0.0) {
        return Err(Error::InvalidArgument(
            "sensing noise variance must be nonnegative".into(),
        ));
    }
    if num_users == 0 {
        return Err(Error::InvalidArgument("num_users must be positive".into()));
    }
    let l = class_model.num_classes() as f64;
    let dims = class_model.feature_dim();
    let cov = class_model.covariance_diag();
    let mut nu = Vec::with_capacity(dims);
    let mut var_per_dim = Vec::with_capacity(dims);
    let mut delta_min_sq = Vec::with_capacity(dims);
    for m in 0..dims {
        let mean_sq = class_model
            .means()
            .iter()
            .map(|mu| mu[m] * mu[m])
            .sum::<f64>()
            / l;
        nu.push(mean_sq + cov[m] + sensing_noise_var);
        var_per_dim.push(cov[m] + sensing_noise_var);
        delta_min_sq.push(class_model.delta_min_sq(m));
    }
    Ok(SecondMoments {
        nu_sq: vec![nu; num_users],
        delta_min_sq,
        var_per_dim,
    })
}

/// Everything an allocator needs for one channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInstance {
    /// `K × M` gains, one column per transmitted feature element.
    pub channels: ChannelRealization,
    pub budgets: Vec<f64>,
    pub nu_sq: Vec<Vec<f64>>,
    pub var_per_dim: Vec<f64>,
    pub delta_min_sq: Vec<f64>,
    pub noise_var: f64,
}

impl SolverInstance {
    pub fn new(
        channels: ChannelRealization,
        budgets: Vec<f64>,
        moments: &SecondMoments,
        noise_var: f64,
    ) -> Result<Self> {
        let inst = SolverInstance {
            channels,
            budgets,
            nu_sq: moments.nu_sq.clone(),
            var_per_dim: moments.var_per_dim.clone(),
            delta_min_sq: moments.delta_min_sq.clone(),
            noise_var,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn num_users(&self) -> usize {
        self.budgets.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.var_per_dim.len()
    }

    pub fn moments(&self) -> SecondMoments {
        SecondMoments {
            nu_sq: self.nu_sq.clone(),
            delta_min_sq: self.delta_min_sq.clone(),
            var_per_dim: self.var_per_dim.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (k, m) = (self.budgets.len(), self.var_per_dim.len());
        if k == 0 || m == 0 {
            return Err(Error::DimensionMismatch("empty instance".into()));
        }
        if self.channels.num_users() != k
            || self.channels.num_columns() != m
            || self.nu_sq.len() != k
            || self.nu_sq.iter().any(|row| row.len() != m)
            || self.delta_min_sq.len() != m
        {
            return Err(Error::DimensionMismatch(format!(
                "instance with {k} users and {m} dims has inconsistent arrays"
            )));
        }
        let positive = |v: &f64| *v > 0.0 && v.is_finite();
        if !self.budgets.iter().all(positive)
            || !self.nu_sq.iter().flatten().all(positive)
            || !self.var_per_dim.iter().all(positive)
            || !positive(&self.noise_var)
        {
            return Err(Error::InvalidArgument(
                "budgets, second moments and variances must be positive".into(),
            ));
        }
        if !self.delta_min_sq.iter().all(|d| *d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(
                "delta_min_sq must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}
