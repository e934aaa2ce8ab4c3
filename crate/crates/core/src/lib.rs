//! Integrated parameter-efficient tuning (embedding prompts plus adapters)
//! on miniature AST-style and wav2vec2-style audio transformers.
//!
//! The crate is laid out bottom-up:
//! - [`numerics`]: tensors, a reverse-mode tape, finite-difference checks
//! - [`backbone`]: the two frozen encoder pipelines
//! - [`tuning`]: FT, LP, IP, EP, Adapter and IPET, plus parameter accounting
//! - [`training`]: losses, Adam, the training loop, speaker scoring
//! - [`metrics`]: accuracy, mAP and EER
//! - [`data`]: synthetic tasks and the on-disk feature format
//! - [`experiment`]: config-driven runs and parameter sweeps

pub mod backbone;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod numerics;
pub mod par;
pub mod training;
pub mod tuning;

pub use error::{Error, Result};
