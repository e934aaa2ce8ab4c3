use std::fmt;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState};
use super::embedding::{cosine_score, speaker_embedding};
use super::loss::{cross_entropy, multi_hot, multilabel_bce};
use super::{LossKind, TaskKind, TrainConfig};
use crate::backbone::Model;
use crate::data::{Dataset, Split, Target};
use crate::metrics::{accuracy, argmax, equal_error_rate, mean_average_precision, ScoredTrials};
use crate::numerics::{SeededRng, Tape};
use crate::par::{try_map_indexed, Execution};
use crate::tuning::{assert_frozen, FrozenSnapshot, ParamLedger};
use crate::{Error, Result};

const STREAM_SHUFFLE: u64 = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Acc,
    Map,
    Eer,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Acc => "Acc",
            MetricName::Map => "mAP",
            MetricName::Eer => "EER",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: MetricName,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: TaskKind,
    pub lr: f64,
    pub steps: usize,
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    /// Train-split accuracy (mAP for multi-label tasks) after each epoch.
    pub train_metric: Vec<f64>,
    /// Optimizer steps taken when the train metric first reached 1.
    pub steps_to_fit: Option<usize>,
    pub initial: Metric,
    #[serde(rename = "final")]
    pub final_metric: Metric,
    pub ledger: ParamLedger,
    pub frozen_checked: usize,
}

fn check_targets(data: &Dataset, task: TaskKind) -> Result<()> {
    let fits = |t: &Target| match task {
        TaskKind::Classification => matches!(t, Target::Class(_)),
        TaskKind::Multilabel => matches!(t, Target::Multi(_)),
        TaskKind::Verification => matches!(t, Target::Speaker(_)),
    };
    if let Some(i) = data.samples.iter().position(|s| !fits(&s.target)) {
        return Err(Error::Input(format!("sample {i} has a target that does not fit a {task:?} task")));
    }
    if task == TaskKind::Verification && data.trials.is_empty() {
        return Err(Error::Input("verification task has no trials".into()));
    }
    Ok(())
}

fn logits_of(model: &Model<f32>, data: &Dataset, indices: &[usize], exec: Execution) -> Result<Vec<Vec<f64>>> {
    try_map_indexed(indices.len(), exec, |j| {
        let z = model.logits(&data.samples[indices[j]].input)?;
        Ok(z.into_iter().map(f64::from).collect())
    })
}

/// Accuracy (mAP for multi-label tasks) on `indices`.
pub fn train_metric(model: &Model<f32>, data: &Dataset, indices: &[usize], task: TaskKind, exec: Execution) -> Result<f64> {
    let scores = logits_of(model, data, indices, exec)?;
    match task {
        TaskKind::Multilabel => {
            let targets: Vec<Vec<bool>> = indices
                .iter()
                .map(|&i| match &data.samples[i].target {
                    Target::Multi(cs) => (0..data.num_classes).map(|c| cs.contains(&c)).collect(),
                    _ => vec![false; data.num_classes],
                })
                .collect();
            Ok(mean_average_precision(&scores, &targets)?.value)
        }
        TaskKind::Classification | TaskKind::Verification => {
            let predictions: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
            let labels: Vec<usize> = indices.iter().map(|&i| data.samples[i].target.class().unwrap_or(usize::MAX)).collect();
            Ok(accuracy(&predictions, &labels)?)
        }
    }
}

/// Test-split metric: accuracy, mAP, or EER over the verification trials.
pub fn evaluate(model: &Model<f32>, data: &Dataset, task: TaskKind, exec: Execution) -> Result<Metric> {
    match task {
        TaskKind::Verification => {
            let mut used: Vec<usize> = data.trials.iter().flat_map(|t| [t.enroll, t.test]).collect();
            used.sort_unstable();
            used.dedup();
            let embeddings = try_map_indexed(used.len(), exec, |j| speaker_embedding(model, &data.samples[used[j]].input))?;
            let lookup = |i: usize| &embeddings[used.binary_search(&i).expect("trial sample embedded")];
            let mut trials = ScoredTrials::default();
            for t in &data.trials {
                trials.push(cosine_score(lookup(t.enroll), lookup(t.test))?, t.target);
            }
            Ok(Metric { name: MetricName::Eer, value: equal_error_rate(&trials)? })
        }
        _ => {
            let test = data.indices(Split::Test);
            if test.is_empty() {
                return Err(Error::Input("dataset has no test split".into()));
            }
            let name = if task == TaskKind::Multilabel { MetricName::Map } else { MetricName::Acc };
            Ok(Metric { name, value: train_metric(model, data, &test, task, exec)? })
        }
    }
}

/// Mean loss over `batch` and its gradient for every trainable parameter.
/// Each sample runs on its own tape; gradients are summed in batch order,
/// so the result does not depend on the execution mode. Trainable
/// parameters the loss does not reach get a zero gradient.
pub fn batch_gradients(
    model: &Model<f32>,
    data: &Dataset,
    batch: &[usize],
    loss: LossKind,
    exec: Execution,
) -> Result<(f64, Vec<Option<Vec<f32>>>)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let inv = 1.0 / batch.len() as f32;
    let per_sample = try_map_indexed(batch.len(), exec, |j| -> Result<(f32, Vec<Option<Vec<f32>>>)> {
        let sample = &data.samples[batch[j]];
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let out = model.forward_bound(&mut tape, &vars, &sample.input)?;
        let l = match (loss, &sample.target) {
            (LossKind::MultilabelBce, Target::Multi(cs)) => {
                let targets = multi_hot(cs, model.num_classes())?;
                multilabel_bce(&mut tape, out.logits, &targets)?
            }
            (LossKind::CrossEntropy, t) if t.class().is_some() => {
                cross_entropy(&mut tape, out.logits, &[t.class().unwrap()])?
            }
            _ => return Err(Error::Input(format!("sample {} target does not fit loss {loss:?}", batch[j]))),
        };
        let scaled = tape.scale(l, inv)?;
        tape.backward(scaled)?;
        let grads = model
            .params()
            .iter()
            .zip(&vars)
            .map(|(p, &v)| match tape.grad(v) {
                Some(g) => Some(g.to_vec()),
                None if p.trainable() => Some(vec![0.0; p.tensor.numel()]),
                None => None,
            })
            .collect();
        Ok((tape.data(scaled)[0], grads))
    })?;

    let mut total = 0.0f64;
    let mut sum: Vec<Option<Vec<f32>>> = vec![None; model.params().len()];
    for (l, grads) in per_sample {
        total += f64::from(l);
        for (acc, g) in sum.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            match acc {
                Some(a) => a.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => *acc = Some(g),
            }
        }
    }
    Ok((total, sum))
}

/// Trains the attached `model` on the train split with Adam, then scores the
/// test split. Frozen parameters are snapshotted on entry and checked bit
/// for bit on exit.
pub fn train(model: &mut Model<f32>, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let task = match cfg.task {
        Some(t) => t,
        None => TaskKind::infer(data)?,
    };
    check_targets(data, task)?;
    if data.num_classes != model.num_classes() {
        return Err(Error::Input(format!(
            "dataset has {} classes, head has {}",
            data.num_classes,
            model.num_classes()
        )));
    }
    let loss = cfg.loss.unwrap_or(task.loss());
    let lr = cfg.learning_rate(model.tuning().map(|t| t.method));
    let exec = cfg.execution;

    let snapshot = FrozenSnapshot::capture(model);
    let ledger = ParamLedger::of_model(model)?;
    let initial = evaluate(model, data, task, exec)?;

    let mut train_idx = data.indices(Split::Train);
    if cfg.epochs > 0 && train_idx.is_empty() {
        return Err(Error::Input("dataset has no train split".into()));
    }
    let mut rng = SeededRng::new(cfg.seed, STREAM_SHUFFLE);
    let mut state = OptimizerState::new(model, lr as f32, cfg.beta1 as f32, cfg.beta2 as f32, cfg.eps as f32);
    let budget = cfg.max_steps.unwrap_or(usize::MAX);

    let mut step_losses = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut train_metrics = Vec::new();
    let mut steps_to_fit = None;
    'epochs: for _ in 0..cfg.epochs {
        if state.step() >= budget {
            break;
        }
        rng.shuffle(&mut train_idx);
        let (mut sum, mut count) = (0.0, 0);
        for batch in train_idx.chunks(cfg.batch_size) {
            let (l, grads) = batch_gradients(model, data, batch, loss, exec)?;
            if !l.is_finite() {
                return Err(Error::Divergence { step: state.step() + 1, loss: l });
            }
            adam_step(&mut state, model, &grads)?;
            step_losses.push(l);
            sum += l;
            count += 1;
            if state.step() >= budget {
                epoch_losses.push(sum / count as f64);
                record_fit(model, data, &train_idx, task, exec, &state, &mut train_metrics, &mut steps_to_fit)?;
                break 'epochs;
            }
        }
        epoch_losses.push(sum / count as f64);
        record_fit(model, data, &train_idx, task, exec, &state, &mut train_metrics, &mut steps_to_fit)?;
    }

    let frozen = assert_frozen(model, &snapshot)?.into_result()?;
    let final_metric = evaluate(model, data, task, exec)?;
    Ok(TrainReport {
        task,
        lr,
        steps: state.step(),
        step_losses,
        epoch_losses,
        train_metric: train_metrics,
        steps_to_fit,
        initial,
        final_metric,
        ledger,
        frozen_checked: frozen.checked,
    })
}

#[allow(clippy::too_many_arguments)]
fn record_fit(
    model: &Model<f32>,
    data: &Dataset,
    train_idx: &[usize],
    task: TaskKind,
    exec: Execution,
    state: &OptimizerState<f32>,
    metrics: &mut Vec<f64>,
    steps_to_fit: &mut Option<usize>,
) -> Result<()> {
    let mut sorted = train_idx.to_vec();
    sorted.sort_unstable();
    let m = train_metric(model, data, &sorted, task, exec)?;
    metrics.push(m);
    if m >= 1.0 && steps_to_fit.is_none() {
        *steps_to_fit = Some(state.step());
    }
    Ok(())
}
