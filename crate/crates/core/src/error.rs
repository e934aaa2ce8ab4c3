use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricError;
use crate::numerics::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("gradient confinement violated: {0}")]
    Confinement(String),
    #[error("frozen parameters drifted: {}", groups.join(", "))]
    FrozenDrift { groups: Vec<String> },
    #[error("snapshot corruption: {0}")]
    Corruption(String),
    #[error("score error: {0}")]
    Score(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
