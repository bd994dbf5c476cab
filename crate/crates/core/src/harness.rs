//! Parameter sweeps and their CSV/JSON output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{estimate_accuracy, LinearClassifier};
use crate::error::{Error, Result};
use crate::fdm_opt::FdmOptions;
use crate::model::{ClassModel, Multiplexing, Scenario};
use crate::policy::{Policy, SchemeKind, SubcarrierMapping};

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// `P_k / σ_w²` in dB, equal for all users.
    #[serde(alias = "SNR_dB", alias = "snr_db")]
    Snr,
    /// Number of devices.
    #[serde(alias = "K")]
    K,
    /// Number of subcarriers.
    #[serde(alias = "N")]
    N,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_class_model() -> ClassModel {
    ClassModel::default_four_class()
}

fn default_schemes() -> Vec<SchemeKind> {
    SchemeKind::ALL.to_vec()
}

/// A sweep read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: Scenario,
    #[serde(default = "default_class_model")]
    pub class_model: ClassModel,
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Equal-budget SNR applied to the base scenario when sweeping `k` or `n`.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeKind>,
    pub trials: usize,
    #[serde(default)]
    pub mapping: SubcarrierMapping,
    #[serde(default)]
    pub solver: FdmOptions,
    #[serde(default)]
    pub classifier: Option<LinearClassifier>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

pub const MIN_TRIALS: usize = 100;

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: SweepConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SweepConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.values.is_empty() {
            return bad("axis values are empty".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("axis values must be finite".into());
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return bad("axis values must be strictly increasing".into());
        }
        if self.trials < MIN_TRIALS {
            return bad(format!(
                "trials must be at least {MIN_TRIALS}, got {}",
                self.trials
            ));
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return bad(format!("scheme {s} listed twice"));
            }
        }
        if self.class_model.feature_dim() != self.scenario.feature_dim() {
            return bad(format!(
                "class model has {} dims but scenario has {}",
                self.class_model.feature_dim(),
                self.scenario.feature_dim()
            ));
        }
        if let Some(c) = &self.classifier {
            c.validate()?;
            if c.weights[0].len() != self.scenario.feature_dim() {
                return bad("classifier dimension differs from feature_dim".into());
            }
        }
        if matches!(self.axis, Axis::K | Axis::N) {
            let integral = self.values.iter().all(|v| *v >= 1.0 && v.fract() == 0.0);
            if !integral {
                return bad("k and n axis values must be positive integers".into());
            }
        }
        if self.axis == Axis::N && self.scenario.scheme() == Multiplexing::Fdm {
            if let Some(v) = self
                .values
                .iter()
                .find(|v| (**v as usize) < self.scenario.feature_dim())
            {
                return bad(format!("n = {v} is below feature_dim"));
            }
        }
        Ok(())
    }

    fn base_scenario(&self) -> Scenario {
        match (self.axis, self.snr_db) {
            (Axis::Snr, _) | (_, None) => self.scenario.clone(),
            (_, Some(db)) => self.scenario.at_snr_db(db),
        }
    }

    /// Scenario at one axis value.
    pub fn scenario_at(&self, value: f64) -> Result<Scenario> {
        let base = self.base_scenario();
        match self.axis {
            Axis::Snr => Ok(base.at_snr_db(value)),
            Axis::K => base.with_num_users(value as usize),
            Axis::N => base.with_num_subcarriers(value as usize),
        }
    }

    pub fn policy(&self, scheme: SchemeKind) -> Policy {
        Policy {
            scheme,
            fdm: self.solver.clone(),
            mapping: self.mapping,
            classifier: self.classifier.clone(),
        }
    }
}

/// One `(axis value, scheme)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: f64,
    pub scheme: SchemeKind,
    pub accuracy: f64,
    pub stderr: f64,
    pub mse: f64,
    pub md: f64,
    /// True when the allocator converged on every trial.
    pub converged: bool,
    pub seed: u64,
    pub trials: usize,
    pub nonconverged: usize,
    /// Trials whose allocation failed the power audit; always zero for a
    /// correct allocator.
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, axis: f64, scheme: SchemeKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.axis == axis && r.scheme == scheme)
    }

    /// Rows of one scheme in axis order.
    pub fn curve(&self, scheme: SchemeKind) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.scheme == scheme).collect()
    }
}

/// Runs every scheme at every axis point; rows are axis-major in the
/// configured scheme order.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.values.len() * config.schemes.len());
    for (point, &value) in config.values.iter().enumerate() {
        let scenario = config.scenario_at(value)?;
        for &scheme in &config.schemes {
            let est = estimate_accuracy(
                &scenario,
                &config.class_model,
                &config.policy(scheme),
                config.trials,
                point,
            )?;
            rows.push(SweepRow {
                axis: value,
                scheme,
                accuracy: est.accuracy,
                stderr: est.stderr,
                mse: est.mean_mse,
                md: est.mean_md,
                converged: est.nonconverged == 0,
                seed: scenario.seed(),
                trials: est.trials,
                nonconverged: est.nonconverged,
                infeasible: est.infeasible,
            });
        }
    }
    Ok(SweepResult {
        axis: config.axis,
        rows,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    axis: f64,
    scheme: &'a str,
    accuracy: f64,
    stderr: f64,
    mse: f64,
    md: f64,
    converged: bool,
    seed: u64,
}

/// Writes `result` to `out` as CSV (`axis,scheme,accuracy,stderr,mse,md,converged,seed`)
/// or pretty JSON.
pub fn write_result<W: Write>(result: &SweepResult, format: OutputFormat, out: W) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::EmptyResult);
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &result.rows {
                w.serialize(CsvRow {
                    axis: r.axis,
                    scheme: r.scheme.name(),
                    accuracy: r.accuracy,
                    stderr: r.stderr,
                    mse: r.mse,
                    md: r.md,
                    converged: r.converged,
                    seed: r.seed,
                })?;
            }
            w.flush().map_err(Error::Write)?;
        }
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, result)?;
            out.write_all(b"\n").map_err(Error::Write)?;
        }
    }
    Ok(())
}

/// Writes `result` to `path`.
pub fn emit(result: &SweepResult, format: OutputFormat, path: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::EmptyResult);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_result(result, format, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
