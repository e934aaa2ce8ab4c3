//! Datasets: synthetic stand-in tasks, the binary feature format, and
//! JSON-lines manifests.

mod format;
mod manifest;
mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbone::Input;

pub use format::{decode_feature, encode_feature, read_feature, write_feature, MAGIC};
pub use manifest::{load_dataset, write_dataset, ManifestRecord};
pub use synthetic::{generate_task, make_trials, InputSpec, TaskFamily, TaskSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest {0} has no records")]
    Empty(PathBuf),
    #[error("missing feature file {0}")]
    MissingFile(PathBuf),
    #[error("bad header in {path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("shape mismatch in {path}: {reason}")]
    Shape { path: PathBuf, reason: String },
    #[error("path {0} listed more than once")]
    DuplicatePath(PathBuf),
    #[error("label {label} out of range for {classes} classes in {path}")]
    LabelRange { path: PathBuf, label: i64, classes: usize },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Class(usize),
    /// Active classes of a multi-label sample.
    Multi(Vec<usize>),
    Speaker(usize),
}

impl Target {
    /// Single class id used for cross-entropy training.
    pub fn class(&self) -> Option<usize> {
        match self {
            Target::Class(c) | Target::Speaker(c) => Some(*c),
            Target::Multi(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Input<f32>,
    pub target: Target,
    pub split: Split,
}

/// Verification trial between two samples (indices into the dataset).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trial {
    pub enroll: usize,
    pub test: usize,
    pub target: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub trials: Vec<Trial>,
}

impl Dataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// FNV-1a over input bits and targets.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for s in &self.samples {
            s.input.tensor().data().iter().for_each(|v| feed(u64::from(v.to_bits())));
            match &s.target {
                Target::Class(c) | Target::Speaker(c) => feed(*c as u64),
                Target::Multi(cs) => cs.iter().for_each(|&c| feed(c as u64)),
            }
        }
        h
    }
}
