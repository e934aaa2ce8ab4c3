//! Losses, Adam, the training loop and speaker scoring.

mod adam;
mod embedding;
mod loss;
mod train;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, OptimizerState};
pub use embedding::{cosine_score, speaker_embedding};
pub use loss::{cross_entropy, multi_hot, multilabel_bce};
pub use train::{batch_gradients, evaluate, train, train_metric, Metric, MetricName, TrainReport};

use crate::data::{Dataset, Target};
use crate::par::Execution;
use crate::tuning::Method;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    MultilabelBce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Single-label, scored by accuracy.
    Classification,
    /// Multi-label, scored by mAP.
    Multilabel,
    /// Speaker classification training, scored by EER over cosine trials.
    Verification,
}

impl TaskKind {
    pub fn loss(self) -> LossKind {
        match self {
            TaskKind::Multilabel => LossKind::MultilabelBce,
            TaskKind::Classification | TaskKind::Verification => LossKind::CrossEntropy,
        }
    }

    /// Task implied by the targets a dataset carries.
    pub fn infer(data: &Dataset) -> Result<Self> {
        let first = data.samples.first().ok_or_else(|| Error::Input("dataset is empty".into()))?;
        Ok(match first.target {
            Target::Class(_) => TaskKind::Classification,
            Target::Multi(_) => TaskKind::Multilabel,
            Target::Speaker(_) => TaskKind::Verification,
        })
    }
}

fn default_batch() -> usize {
    8
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Defaults to 1e-4 for FT and 1e-3 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the task's natural loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    /// Defaults to the kind implied by the dataset's targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    /// Stop after this many optimizer steps even if epochs remain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl TrainConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            epochs,
            batch_size: default_batch(),
            lr: None,
            seed: 0,
            loss: None,
            task: None,
            max_steps: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        if let (Some(task), Some(loss)) = (self.task, self.loss) {
            if task.loss() != loss {
                return Err(Error::Config(format!("loss {loss:?} does not fit task {task:?}")));
            }
        }
        Ok(())
    }

    pub fn learning_rate(&self, method: Option<Method>) -> f64 {
        self.lr.unwrap_or(if method == Some(Method::Ft) { 1e-4 } else { 1e-3 })
    }
}
