use crate::numerics::{Real, Tape, TensorError, Var};
use crate::Result;

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn cross_entropy<T: Real>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    Ok(tape.cross_entropy(logits, labels)?)
}

/// Mean over every entry of the sigmoid binary cross-entropy.
pub fn multilabel_bce<T: Real>(tape: &mut Tape<T>, logits: Var, targets: &[T]) -> Result<Var> {
    Ok(tape.bce_with_logits(logits, targets)?)
}

/// `0/1` row of length `classes` with ones at `active`.
pub fn multi_hot<T: Real>(active: &[usize], classes: usize) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); classes];
    for &c in active {
        let slot = out
            .get_mut(c)
            .ok_or_else(|| TensorError::Label(format!("class {c} outside [0, {classes})")))?;
        *slot = T::one();
    }
    Ok(out)
}
