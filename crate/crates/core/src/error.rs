use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid class model: {0}")]
    InvalidClassModel(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class label {label} out of range 1..={num_classes}")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("channel gain of user {user} is zero")]
    ZeroChannelGain { user: usize },

    #[error("all prices are zero: receive gain is unbounded")]
    UnboundedReceiveGain,

    #[error("PCA rank deficiency: requested {requested} components but data has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),

    #[error("empty result: nothing to emit")]
    EmptyResult,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidClassModel(_) => "invalid_class_model",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::ZeroChannelGain { .. } => "zero_channel_gain",
            Error::UnboundedReceiveGain => "unbounded_receive_gain",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyResult => "empty_result",
            Error::Io { .. } => "io",
            Error::Write(_) => "write",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
