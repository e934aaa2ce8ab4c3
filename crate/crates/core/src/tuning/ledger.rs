use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::input_prompt::input_prompt_shape;
use super::{Method, TuningSpec};
use crate::backbone::{BackboneConfig, BackboneKind, Model};
use crate::numerics::Real;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerGroup {
    pub group: String,
    pub count: usize,
    pub trainable: bool,
}

/// Per-group parameter counts, split into trainable and frozen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamLedger {
    pub groups: Vec<LedgerGroup>,
    pub trainable: usize,
    pub frozen: usize,
}

impl ParamLedger {
    fn from_groups(groups: Vec<LedgerGroup>) -> Self {
        let trainable = groups.iter().filter(|g| g.trainable).map(|g| g.count).sum();
        let frozen = groups.iter().filter(|g| !g.trainable).map(|g| g.count).sum();
        Self { groups, trainable, frozen }
    }

    /// Tallies the tensors a model actually holds, grouped by name in order
    /// of first appearance.
    pub fn of_model<T: Real>(model: &Model<T>) -> Result<Self> {
        let mut groups: Vec<LedgerGroup> = Vec::new();
        for p in model.params() {
            match groups.iter_mut().find(|g| g.group == p.group) {
                Some(g) if g.trainable == p.trainable() => g.count += p.tensor.numel(),
                Some(_) => {
                    return Err(Error::Config(format!("group {} mixes trainable and frozen tensors", p.group)));
                }
                None => groups.push(LedgerGroup {
                    group: p.group.clone(),
                    count: p.tensor.numel(),
                    trainable: p.trainable(),
                }),
            }
        }
        Ok(Self::from_groups(groups))
    }

    pub fn total(&self) -> usize {
        self.trainable + self.frozen
    }

    /// Trainable share in percent.
    pub fn percent(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            100.0 * self.trainable as f64 / self.total() as f64
        }
    }

    pub fn group(&self, name: &str) -> Option<&LedgerGroup> {
        self.groups.iter().find(|g| g.group == name)
    }

    /// `group,count,trainable` rows, then a `total_trainable,total_frozen,percent`
    /// header and its single value row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,count,trainable\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{}", g.group, g.count, g.trainable);
        }
        out.push_str("total_trainable,total_frozen,percent\n");
        let _ = writeln!(out, "{},{},{:.2}", self.trainable, self.frozen, self.percent());
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>14} {:>10}\n", "group", "params", "trainable");
        for g in &self.groups {
            let _ = writeln!(out, "{:<16} {:>14} {:>10}", g.group, g.count, if g.trainable { "yes" } else { "no" });
        }
        let _ = writeln!(
            out,
            "trainable {} / total {} ({:.2}%) = {:.2} M",
            self.trainable,
            self.total(),
            self.percent(),
            self.trainable as f64 / 1e6
        );
        out
    }
}

/// Closed-form parameter count for `config` with `num_classes` outputs and
/// optional tuning method. Nothing is allocated, so real-scale geometries
/// are counted instantly.
pub fn count_params(config: &BackboneConfig, spec: Option<&TuningSpec>, num_classes: usize) -> Result<ParamLedger> {
    config.validate()?;
    if let Some(s) = spec {
        s.validate()?;
    }
    let d = config.width;
    let method = spec.map(|s| s.method);
    let all = matches!(method, None | Some(Method::Ft));
    let mut groups = Vec::new();
    let mut add = |name: String, count: usize, trainable: bool| {
        groups.push(LedgerGroup { group: name, count, trainable })
    };

    match config.kind {
        BackboneKind::AstLike => {
            let (pf, pt) = config.patch_size.expect("validated");
            add("frontend".into(), pf * pt * d + d, all);
            add("cls_token".into(), d, all);
        }
        BackboneKind::W2v2Like => {
            let mut in_ch = 1;
            let mut conv = 0;
            for c in &config.conv_stack {
                conv += c.kernel * in_ch * c.channels + c.channels;
                in_ch = c.channels;
            }
            add("frontend".into(), conv, all);
            add("frontend_norm".into(), 2 * d, all);
        }
    }
    add("positional".into(), (config.max_sequence + 1) * d, all);
    let per_layer = 2 * 2 * d + 4 * (d * d + d) + (d * config.mlp_hidden + config.mlp_hidden) + (config.mlp_hidden * d + d);
    for i in 0..config.depth {
        add(format!("encoder.{i}"), per_layer, all);
    }
    add("head".into(), config.head_dims() * num_classes + num_classes, true);

    if let Some(s) = spec {
        if s.method.uses_input_prompt() {
            let (r, c) = input_prompt_shape(config, s.ip_len);
            add("input_prompt".into(), r * c, true);
        }
        if s.method.uses_prompts() && config.depth > 0 {
            add("prompts".into(), config.depth * s.k * d, true);
        }
        if s.method.uses_adapters() && config.depth > 0 {
            let bias = if s.adapter_bias { s.h + d } else { 0 };
            add("adapters".into(), config.depth * (d * s.h + s.h * d + bias), true);
        }
    }
    Ok(ParamLedger::from_groups(groups))
}
