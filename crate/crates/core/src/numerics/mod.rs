//! Dense tensors, a reverse-mode tape and a finite-difference verifier.

mod gradcheck;
mod rng;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{finite_difference_check, EntryStatus, GradCheckReport, ParamDeviation};
pub use rng::SeededRng;
pub use tape::{OpKind, Tape, Var, LAYER_NORM_EPS, STDDEV_EPS};
pub use tensor::{Real, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension error in {op}: shapes {shapes:?}")]
    Dimension { op: &'static str, shapes: Vec<Vec<usize>> },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("tape error: {0}")]
    Tape(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("non-deterministic loss builder: {0}")]
    Determinism(String),
}
