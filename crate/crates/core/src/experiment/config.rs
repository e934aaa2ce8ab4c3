use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::{conv_output_len, padded_time, BackboneConfig, BackboneKind};
use crate::data::{InputSpec, TaskFamily, TaskSpec};
use crate::training::{TaskKind, TrainConfig};
use crate::tuning::TuningSpec;
use crate::{Error, Result};

/// Environment variable overriding every seed in a config.
pub const SEED_ENV: &str = "PEFT_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSource {
    Synthetic(TaskSpec),
    /// JSON-lines manifest; relative paths resolve against the config file.
    Manifest {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        num_classes: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub backbone: BackboneConfig,
    pub tuning: TuningSpec,
    pub task: TaskSource,
    pub train: TrainConfig,
    /// Where `run` writes its report when no `--out` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates `path`, resolving relative manifest and output
    /// paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if let TaskSource::Manifest { path, .. } = &mut cfg.task {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets the backbone, task and training seeds to `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.backbone.seed = seed;
        self.train.seed = seed;
        if let TaskSource::Synthetic(spec) = &mut self.task {
            spec.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.tuning.validate()?;
        self.train.validate()?;
        match &self.task {
            TaskSource::Synthetic(spec) => {
                spec.validate()?;
                self.check_input(spec)?;
                let implied = match spec.family {
                    TaskFamily::SecLike => TaskKind::Multilabel,
                    TaskFamily::SvLike => TaskKind::Verification,
                    TaskFamily::MgcLike | TaskFamily::KsLike => TaskKind::Classification,
                };
                if let Some(task) = self.train.task {
                    if task != implied {
                        return Err(Error::Config(format!("task {task:?} does not fit family {:?}", spec.family)));
                    }
                }
            }
            TaskSource::Manifest { path, num_classes } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("manifest {} does not exist", path.display())));
                }
                if num_classes.is_some_and(|c| c < 2) {
                    return Err(Error::Config("manifest num_classes must be at least 2".into()));
                }
            }
        }
        if self.tuning.method.uses_prompts() && self.tuning.k > self.backbone.max_sequence {
            return Err(Error::Config(format!(
                "k = {} reaches the attention capacity of {} tokens",
                self.tuning.k,
                self.backbone.max_sequence + 1
            )));
        }
        if self.backbone.depth == 0 && (self.tuning.method.uses_prompts() || self.tuning.method.uses_adapters()) {
            return Err(Error::Config(format!("{} needs at least one encoder layer", self.tuning.method)));
        }
        Ok(())
    }

    fn check_input(&self, spec: &TaskSpec) -> Result<()> {
        let b = &self.backbone;
        let tokens = match (b.kind, spec.input) {
            (BackboneKind::AstLike, InputSpec::Spectrogram { freq, time }) => {
                if Some(freq) != b.freq_bins {
                    return Err(Error::Config(format!(
                        "task spectrograms have {freq} bins, backbone expects {:?}",
                        b.freq_bins
                    )));
                }
                let (pf, pt) = b.patch_size.expect("validated");
                if self.tuning.method.uses_input_prompt() && self.tuning.ip_len > time {
                    return Err(Error::Config(format!("ip_len {} exceeds {time} frames", self.tuning.ip_len)));
                }
                (freq / pf) * (padded_time(time, pt) / pt)
            }
            (BackboneKind::W2v2Like, InputSpec::Waveform { samples }) => {
                if self.tuning.method.uses_input_prompt() && self.tuning.ip_len > samples {
                    return Err(Error::Config(format!("ip_len {} exceeds {samples} samples", self.tuning.ip_len)));
                }
                b.conv_stack
                    .iter()
                    .try_fold(samples, |len, c| conv_output_len(len, c.kernel, c.stride))
                    .ok_or_else(|| Error::Config(format!("waveforms of {samples} samples are too short")))?
            }
            (kind, input) => {
                return Err(Error::Config(format!("task input {input:?} does not fit a {kind:?} backbone")));
            }
        };
        if tokens > b.max_sequence {
            return Err(Error::Config(format!("inputs yield {tokens} tokens, max_sequence is {}", b.max_sequence)));
        }
        Ok(())
    }
}
