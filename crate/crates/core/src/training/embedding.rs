use crate::backbone::{Input, Model};
use crate::numerics::{Real, Tape};
use crate::{Error, Result};

/// Pre-head representation of `input`, scaled to unit L2 norm.
pub fn speaker_embedding<T: Real>(model: &Model<T>, input: &Input<T>) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, input)?;
    let rep: Vec<f64> = tape.data(out.representation).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let norm = rep.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Score(format!("representation has norm {norm}")));
    }
    Ok(rep.into_iter().map(|v| v / norm).collect())
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Score(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Score("cosine of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
