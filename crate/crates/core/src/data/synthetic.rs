//! Desk-scale stand-ins for the benchmark tasks. Every class owns a fixed
//! Gaussian template; samples are templates plus white noise.

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, Split, Target, Trial};
use crate::backbone::Input;
use crate::numerics::{SeededRng, Tensor};
use crate::{Error, Result};

const STREAM_TEMPLATES: u64 = 11;
const STREAM_NOISE: u64 = 12;
const STREAM_LABELS: u64 = 13;
const STREAM_TRIALS: u64 = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    /// Sound events, multi-label (scored with mAP).
    SecLike,
    /// Music genre, single-label.
    MgcLike,
    /// Keyword spotting, single-label.
    KsLike,
    /// Speaker identification training plus verification trials.
    SvLike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Spectrogram { freq: usize, time: usize },
    Waveform { samples: usize },
}

fn default_test_per_class() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub num_classes: usize,
    /// Training samples per class.
    pub samples_per_class: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    pub input: InputSpec,
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("task needs at least 2 classes, got {}", self.num_classes)));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.family == TaskFamily::SvLike && self.test_per_class < 2 {
            return Err(Error::Config("sv_like needs test_per_class >= 2 to form target trials".into()));
        }
        match self.input {
            InputSpec::Spectrogram { freq, time } if freq == 0 || time == 0 => {
                Err(Error::Config("spectrogram dimensions must be positive".into()))
            }
            InputSpec::Waveform { samples: 0 } => Err(Error::Config("waveform length must be positive".into())),
            _ => Ok(()),
        }
    }

    fn numel(&self) -> usize {
        match self.input {
            InputSpec::Spectrogram { freq, time } => freq * time,
            InputSpec::Waveform { samples } => samples,
        }
    }

    fn wrap(&self, data: Vec<f32>) -> Input<f32> {
        match self.input {
            InputSpec::Spectrogram { freq, time } => Input::Spectrogram(Tensor::matrix(freq, time, data).unwrap()),
            InputSpec::Waveform { samples } => Input::Waveform(Tensor::new(vec![samples], data).unwrap()),
        }
    }
}

/// Balanced verification trials over the test split: each test sample is
/// paired once with the next test sample of the same class (target) and
/// once with a random test sample of another class (non-target).
pub fn make_trials(samples: &[Sample], seed: u64) -> Vec<Trial> {
    let mut rng = SeededRng::new(seed, STREAM_TRIALS);
    let test: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].split == Split::Test).collect();
    let class_of = |i: usize| samples[i].target.class();
    let mut trials = Vec::new();
    for (pos, &i) in test.iter().enumerate() {
        let Some(c) = class_of(i) else { continue };
        let same = (1..test.len()).map(|o| test[(pos + o) % test.len()]).find(|&j| class_of(j) == Some(c));
        let others: Vec<usize> = test.iter().copied().filter(|&j| class_of(j).is_some_and(|cj| cj != c)).collect();
        if let (Some(j), false) = (same, others.is_empty()) {
            trials.push(Trial { enroll: i, test: j, target: true });
            trials.push(Trial { enroll: i, test: others[rng.below(others.len())], target: false });
        }
    }
    trials
}

pub fn generate_task(spec: &TaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.numel();
    let mut template_rng = SeededRng::new(spec.seed, STREAM_TEMPLATES);
    let templates: Vec<Vec<f64>> = (0..spec.num_classes).map(|_| (0..n).map(|_| template_rng.normal()).collect()).collect();
    let mut noise_rng = SeededRng::new(spec.seed, STREAM_NOISE);
    let mut label_rng = SeededRng::new(spec.seed, STREAM_LABELS);

    let mut samples = Vec::new();
    for (split, per_class) in [(Split::Train, spec.samples_per_class), (Split::Test, spec.test_per_class)] {
        for i in 0..per_class * spec.num_classes {
            let class = i % spec.num_classes;
            let mut active = vec![class];
            if spec.family == TaskFamily::SecLike && label_rng.below(2) == 1 {
                let extra = (class + 1 + label_rng.below(spec.num_classes - 1)) % spec.num_classes;
                active.push(extra);
                active.sort_unstable();
            }
            let data: Vec<f32> = (0..n)
                .map(|j| {
                    let clean: f64 = active.iter().map(|&c| templates[c][j]).sum();
                    let noise = if spec.noise > 0.0 { spec.noise * noise_rng.normal() } else { 0.0 };
                    (clean + noise) as f32
                })
                .collect();
            let target = match spec.family {
                TaskFamily::SecLike => Target::Multi(active),
                TaskFamily::SvLike => Target::Speaker(class),
                TaskFamily::MgcLike | TaskFamily::KsLike => Target::Class(class),
            };
            samples.push(Sample { input: spec.wrap(data), target, split });
        }
    }
    let trials = if spec.family == TaskFamily::SvLike { make_trials(&samples, spec.seed) } else { Vec::new() };
    Ok(Dataset { samples, num_classes: spec.num_classes, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: TaskFamily, noise: f64, seed: u64) -> TaskSpec {
        TaskSpec {
            family,
            num_classes: 3,
            samples_per_class: 4,
            test_per_class: 2,
            input: InputSpec::Spectrogram { freq: 4, time: 4 },
            noise,
            seed,
        }
    }

    #[test]
    fn zero_noise_samples_equal_templates() {
        let data = generate_task(&spec(TaskFamily::KsLike, 0.0, 1)).unwrap();
        for s in &data.samples {
            let c = s.target.class().unwrap();
            let first = data.samples.iter().find(|o| o.target.class() == Some(c)).unwrap();
            assert_eq!(s.input, first.input);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_task(&spec(TaskFamily::MgcLike, 0.3, 5)).unwrap();
        let b = generate_task(&spec(TaskFamily::MgcLike, 0.3, 5)).unwrap();
        let c = generate_task(&spec(TaskFamily::MgcLike, 0.3, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn sv_trials_are_balanced() {
        let data = generate_task(&spec(TaskFamily::SvLike, 0.1, 2)).unwrap();
        let targets = data.trials.iter().filter(|t| t.target).count();
        assert_eq!(targets * 2, data.trials.len());
        assert_eq!(targets, 6);
        for t in &data.trials {
            let same = data.samples[t.enroll].target == data.samples[t.test].target;
            assert_eq!(same, t.target);
        }
    }

    #[test]
    fn sec_like_is_multilabel() {
        let data = generate_task(&spec(TaskFamily::SecLike, 0.1, 3)).unwrap();
        assert!(data.samples.iter().all(|s| matches!(s.target, Target::Multi(_))));
        assert!(data.samples.iter().any(|s| matches!(&s.target, Target::Multi(v) if v.len() == 2)));
    }

    #[test]
    fn rejects_single_class() {
        let mut s = spec(TaskFamily::KsLike, 0.1, 1);
        s.num_classes = 1;
        assert!(generate_task(&s).is_err());
    }
}
