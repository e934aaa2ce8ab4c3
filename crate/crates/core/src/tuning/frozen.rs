use crate::backbone::Model;
use crate::numerics::Real;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    group: String,
    shape: Vec<usize>,
    bits: Vec<u64>,
}

/// Bit-exact copy of every frozen parameter, taken right after attach.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenSnapshot {
    entries: Vec<Entry>,
}

fn bits<T: Real>(data: &[T]) -> Vec<u64> {
    data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN).to_bits()).collect()
}

impl FrozenSnapshot {
    pub fn capture<T: Real>(model: &Model<T>) -> Self {
        let entries = model
            .params()
            .iter()
            .filter(|p| !p.trainable())
            .map(|p| Entry {
                name: p.name.clone(),
                group: p.group.clone(),
                shape: p.tensor.shape().to_vec(),
                bits: bits(p.tensor.data()),
            })
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrozenReport {
    pub checked: usize,
    /// Names of parameters whose bits changed.
    pub drifted: Vec<String>,
    /// Groups those parameters belong to, deduplicated in order.
    pub drifted_groups: Vec<String>,
}

impl FrozenReport {
    pub fn passed(&self) -> bool {
        self.drifted.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::FrozenDrift { groups: self.drifted_groups })
        }
    }
}

/// Compares every snapshotted parameter against the model, bit for bit.
pub fn assert_frozen<T: Real>(model: &Model<T>, snapshot: &FrozenSnapshot) -> Result<FrozenReport> {
    let mut report = FrozenReport::default();
    for e in &snapshot.entries {
        let p = model
            .param(&e.name)
            .ok_or_else(|| Error::Corruption(format!("snapshot parameter {} missing from model", e.name)))?;
        if p.tensor.shape() != e.shape.as_slice() {
            return Err(Error::Corruption(format!(
                "{} has shape {:?}, snapshot recorded {:?}",
                e.name,
                p.tensor.shape(),
                e.shape
            )));
        }
        report.checked += 1;
        if bits(p.tensor.data()) != e.bits {
            report.drifted.push(e.name.clone());
            if !report.drifted_groups.contains(&e.group) {
                report.drifted_groups.push(e.group.clone());
            }
        }
    }
    Ok(report)
}
