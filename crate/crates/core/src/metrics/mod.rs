//! Accuracy, mean average precision and equal error rate.

mod accuracy;
mod average_precision;
mod eer;

use thiserror::Error;

pub use accuracy::{accuracy, argmax};
pub use average_precision::{average_precision, mean_average_precision, MapResult};
pub use eer::{equal_error_rate, ScoredTrials};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("input error: {0}")]
    Input(String),
    #[error("metric error: {0}")]
    Undefined(String),
    #[error("trial composition error: {0}")]
    TrialComposition(String),
}
