use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TaskSource};
use crate::backbone::Model;
use crate::data::{generate_task, load_dataset, Dataset};
use crate::par::try_map_indexed;
use crate::training::{train, Metric, TaskKind};
use crate::tuning::{attach, count_params, Method, ParamLedger};
use crate::{Error, Result};

/// Everything one `run` produced. Field order is the JSON order;
/// `wall_clock_secs` comes last so it can be masked line-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub method: Method,
    pub task: TaskKind,
    pub dataset_checksum: String,
    pub ledger: ParamLedger,
    pub trainable_percent: String,
    pub lr: f64,
    pub steps: usize,
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
    pub train_metric: Vec<f64>,
    pub steps_to_fit: Option<usize>,
    pub initial_metric: Metric,
    pub metric: Metric,
    pub frozen_checked: usize,
    pub frozen_passed: bool,
    pub wall_clock_secs: f64,
}

impl TrialReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn load_task(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.task {
        TaskSource::Synthetic(spec) => generate_task(spec),
        TaskSource::Manifest { path, num_classes } => Ok(load_dataset(path, *num_classes, cfg.train.seed)?),
    }
}

/// Builds the backbone, attaches the tuning method, trains and evaluates.
pub fn run(cfg: &ExperimentConfig) -> Result<TrialReport> {
    cfg.validate()?;
    let start = Instant::now();
    let data = load_task(cfg)?;
    let model = Model::<f32>::new(cfg.backbone.clone(), data.num_classes)?;
    let mut model = attach(model, &cfg.tuning)?;
    let report = train(&mut model, &data, &cfg.train)?;
    Ok(TrialReport {
        config: cfg.clone(),
        seed: cfg.train.seed,
        method: cfg.tuning.method,
        task: report.task,
        dataset_checksum: format!("{:016x}", data.checksum()),
        trainable_percent: format!("{:.2}", report.ledger.percent()),
        ledger: report.ledger,
        lr: report.lr,
        steps: report.steps,
        epoch_losses: report.epoch_losses,
        step_losses: report.step_losses,
        train_metric: report.train_metric,
        steps_to_fit: report.steps_to_fit,
        initial_metric: report.initial,
        metric: report.final_metric,
        frozen_checked: report.frozen_checked,
        frozen_passed: true,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Parameter ledger for `cfg` without building or training a model.
pub fn ledger(cfg: &ExperimentConfig) -> Result<ParamLedger> {
    cfg.validate()?;
    let classes = match &cfg.task {
        TaskSource::Synthetic(spec) => spec.num_classes,
        TaskSource::Manifest { num_classes: Some(c), .. } => *c,
        TaskSource::Manifest { .. } => load_task(cfg)?.num_classes,
    };
    count_params(&cfg.backbone, Some(&cfg.tuning), classes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Prompts per layer.
    K,
    /// Adapter bottleneck width.
    H,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "h" => Ok(SweepAxis::H),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}; expected k or h"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub trainable_params: usize,
    pub metric: f64,
}

/// One run per value, all sharing the config's seed. Rows follow `values`.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    let method = cfg.tuning.method;
    let applies = match axis {
        SweepAxis::K => method.uses_prompts(),
        SweepAxis::H => method.uses_adapters(),
    };
    if !applies {
        return Err(Error::Config(format!("axis {axis:?} does not apply to {method}")));
    }
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match axis {
                SweepAxis::K => c.tuning.k = v,
                SweepAxis::H => c.tuning.h = v,
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    try_map_indexed(configs.len(), cfg.train.execution, |i| {
        let report = run(&configs[i])?;
        Ok(SweepRow { value: values[i], trainable_params: report.ledger.trainable, metric: report.metric.value })
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,trainable_params,metric\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.value, r.trainable_params, r.metric);
    }
    out
}
