use thiserror::Error;

use crate::config::ConfigError;
use crate::io::FormatError;
use crate::metrics::{FitError, MetricError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("stream is not sorted by time at index {index}")]
    Unsorted { index: usize },
    #[error("histogram shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("histogram range too small: peak at {center_ps} ps needs [{lo_ps}, {hi_ps}) ps")]
    RangeTooSmall { center_ps: i64, lo_ps: i64, hi_ps: i64 },
}
