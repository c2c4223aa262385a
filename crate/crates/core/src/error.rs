use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no prediction is available outside the theorem's parameter range (alpha = {alpha})")]
    NoPrediction { alpha: f64 },

    #[error("moment ({m},{n}) in the critical regime has no closed form; use the limit-law sampler")]
    UseSampler { m: u32, n: u32 },

    #[error("field time {field} does not match the step midpoint {expected}")]
    TimeMismatch { field: f64, expected: f64 },

    #[error("probe {0:?} is not a grid mode")]
    OffGrid(Vec<f64>),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("realization {index} (seed {seed:#018x}) failed: {source}")]
    Realization {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
