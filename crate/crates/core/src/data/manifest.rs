use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{read_feature, write_feature};
use super::synthetic::make_trials;
use super::{DataError, Dataset, Sample, Split, Target};
use crate::backbone::Input;

/// One manifest line. Exactly one of `label`, `labels`, `speaker` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<i64>,
    pub split: Split,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum LabelKind {
    Class,
    Multi,
    Speaker,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Loads a JSON-lines manifest. Feature paths resolve relative to the
/// manifest's directory. With `num_classes = None` the class count is
/// inferred as `max label + 1`. Verification trials are rebuilt from the
/// test split with `trial_seed`.
pub fn load_dataset(manifest: &Path, num_classes: Option<usize>, trial_seed: u64) -> Result<Dataset, DataError> {
    let file = fs::File::open(manifest).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(manifest.to_path_buf()),
        _ => DataError::Io { path: manifest.to_path_buf(), source },
    })?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));

    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(manifest))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| DataError::Manifest { line: i + 1, reason: e.to_string() })?;
        let kind = match (&rec.label, &rec.labels, &rec.speaker) {
            (Some(_), None, None) => LabelKind::Class,
            (None, Some(_), None) => LabelKind::Multi,
            (None, None, Some(_)) => LabelKind::Speaker,
            _ => {
                return Err(DataError::Manifest {
                    line: i + 1,
                    reason: "exactly one of label, labels, speaker must be given".into(),
                })
            }
        };
        records.push((i + 1, kind, rec));
    }
    if records.is_empty() {
        return Err(DataError::Empty(manifest.to_path_buf()));
    }
    let kind = records[0].1;
    if let Some((line, _, _)) = records.iter().find(|r| r.1 != kind) {
        return Err(DataError::Manifest { line: *line, reason: "mixed label kinds in one manifest".into() });
    }

    let mut seen = HashSet::new();
    for (_, _, rec) in &records {
        if !seen.insert(rec.path.clone()) {
            return Err(DataError::DuplicatePath(PathBuf::from(&rec.path)));
        }
    }

    let all_labels = |rec: &ManifestRecord| -> Vec<i64> {
        rec.label.into_iter().chain(rec.speaker).chain(rec.labels.clone().unwrap_or_default()).collect()
    };
    let max_label = records.iter().flat_map(|r| all_labels(&r.2)).max().unwrap_or(0);
    let classes = num_classes.unwrap_or(max_label.max(0) as usize + 1);

    let mut samples = Vec::with_capacity(records.len());
    let mut reference: Option<(PathBuf, Vec<usize>)> = None;
    for (_, _, rec) in &records {
        let path = base.join(&rec.path);
        for &l in &all_labels(rec) {
            if l < 0 || l as usize >= classes {
                return Err(DataError::LabelRange { path, label: l, classes });
            }
        }
        let tensor = read_feature(&path)?;
        match &reference {
            Some((first, shape)) if shape.as_slice() != tensor.shape() => {
                return Err(DataError::Shape {
                    path,
                    reason: format!("shape {:?} differs from {:?} in {}", tensor.shape(), shape, first.display()),
                });
            }
            Some(_) => {}
            None => reference = Some((path.clone(), tensor.shape().to_vec())),
        }
        let input = match tensor.shape().len() {
            1 => Input::Waveform(tensor),
            2 => Input::Spectrogram(tensor),
            n => return Err(DataError::Shape { path, reason: format!("{n}-D features are not supported") }),
        };
        let target = match kind {
            LabelKind::Class => Target::Class(rec.label.unwrap() as usize),
            LabelKind::Speaker => Target::Speaker(rec.speaker.unwrap() as usize),
            LabelKind::Multi => {
                let mut v: Vec<usize> = rec.labels.as_ref().unwrap().iter().map(|&l| l as usize).collect();
                v.sort_unstable();
                v.dedup();
                Target::Multi(v)
            }
        };
        samples.push(Sample { input, target, split: rec.split });
    }
    let trials = if kind == LabelKind::Speaker { make_trials(&samples, trial_seed) } else { Vec::new() };
    Ok(Dataset { samples, num_classes: classes, trials })
}

/// Writes each sample as `sample_NNNNN.peft` under `dir` plus
/// `manifest.jsonl`, and returns the manifest path.
pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = dir.join("manifest.jsonl");
    let mut out = fs::File::create(&manifest).map_err(io_err(&manifest))?;
    for (i, s) in data.samples.iter().enumerate() {
        let name = format!("sample_{i:05}.peft");
        write_feature(&dir.join(&name), s.input.tensor())?;
        let mut rec = ManifestRecord { path: name, label: None, labels: None, speaker: None, split: s.split };
        match &s.target {
            Target::Class(c) => rec.label = Some(*c as i64),
            Target::Speaker(c) => rec.speaker = Some(*c as i64),
            Target::Multi(cs) => rec.labels = Some(cs.iter().map(|&c| c as i64).collect()),
        }
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(out, "{line}").map_err(io_err(&manifest))?;
    }
    Ok(manifest)
}
