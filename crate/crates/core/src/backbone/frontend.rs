//! Input frontends: spectrogram patch embedding and the strided conv stack.

use super::config::ConvLayer;
use super::TokenSequence;
use crate::numerics::{Real, Tape, Tensor, Var};
use crate::{Error, Result};

/// Time extent after zero-padding `frames` up to a multiple of `pt`.
pub fn padded_time(frames: usize, pt: usize) -> usize {
    frames.div_ceil(pt) * pt
}

/// Gather map turning an `F × T` spectrogram into row-major patches of
/// `pf · pt` entries. Time positions beyond `T` (padding) map to `None`.
/// Returns `(patch count, index)`.
pub fn patch_index(freq: usize, time: usize, pf: usize, pt: usize) -> Result<(usize, Vec<Option<usize>>)> {
    if freq == 0 || time == 0 {
        return Err(Error::Input("empty spectrogram".into()));
    }
    if freq % pf != 0 {
        return Err(Error::Input(format!("{freq} frequency bins not divisible by patch height {pf}")));
    }
    let padded = padded_time(time, pt);
    let (rows, cols) = (freq / pf, padded / pt);
    let mut index = Vec::with_capacity(rows * cols * pf * pt);
    for pr in 0..rows {
        for pc in 0..cols {
            for i in 0..pf {
                for j in 0..pt {
                    let (f, t) = (pr * pf + i, pc * pt + j);
                    index.push((t < time).then_some(f * time + t));
                }
            }
        }
    }
    Ok((rows * cols, index))
}

/// Splits an `F × T` spectrogram into flattened patches in row-major patch
/// order, zero-padding time to a multiple of the patch width.
pub fn patchify<T: Real>(spectrogram: &Tensor<T>, patch_size: (usize, usize)) -> Result<Vec<Vec<T>>> {
    let (freq, time) = spectrogram_dims(spectrogram)?;
    let (pf, pt) = patch_size;
    let (n, index) = patch_index(freq, time, pf, pt)?;
    let data = spectrogram.data();
    let flat: Vec<T> = index.iter().map(|i| i.map_or(T::zero(), |i| data[i])).collect();
    debug_assert_eq!(flat.len(), n * pf * pt);
    Ok(flat.chunks(pf * pt).map(<[T]>::to_vec).collect())
}

pub(crate) fn spectrogram_dims<T: Real>(x: &Tensor<T>) -> Result<(usize, usize)> {
    match x.shape() {
        [f, t] => Ok((*f, *t)),
        s => Err(Error::Input(format!("spectrogram must be 2-D, got shape {s:?}"))),
    }
}

/// Patch matrix (`n × pf·pt`) as a tape value, so gradients reach an input
/// prompt applied to the spectrogram.
pub(crate) fn patchify_on_tape<T: Real>(
    tape: &mut Tape<T>,
    spectrogram: Var,
    patch_size: (usize, usize),
) -> Result<Var> {
    let (freq, time) = tape.shape(spectrogram);
    let (pf, pt) = patch_size;
    let (n, index) = patch_index(freq, time, pf, pt)?;
    Ok(tape.gather(spectrogram, index, n, pf * pt)?)
}

/// `E¹ = patches · W + b`, prefixed by the classification token when given.
pub fn embed_patches<T: Real>(
    tape: &mut Tape<T>,
    patches: Var,
    weight: Var,
    bias: Var,
    class_token: Option<Var>,
) -> Result<TokenSequence> {
    let projected = tape.matmul(patches, weight)?;
    let embeddings = tape.add(projected, bias)?;
    let tokens = match class_token {
        Some(cls) => tape.concat_rows(&[cls, embeddings])?,
        None => embeddings,
    };
    Ok(TokenSequence { tokens, has_class_token: class_token.is_some(), layer: 1 })
}

pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel).then(|| (len - kernel) / stride + 1)
}

/// Shortest waveform for which every conv layer yields at least one frame.
pub fn min_waveform_len(stack: &[ConvLayer]) -> usize {
    stack.iter().rev().fold(1, |need, c| (need - 1) * c.stride + c.kernel)
}

/// Unfold map for a strided 1-D convolution over an `L × C` signal: row `t`
/// holds `x[t·stride + j, c]` at column `j·C + c`.
pub fn unfold_index(len: usize, channels: usize, kernel: usize, stride: usize) -> Option<(usize, Vec<usize>)> {
    let frames = conv_output_len(len, kernel, stride)?;
    let mut index = Vec::with_capacity(frames * kernel * channels);
    for t in 0..frames {
        for j in 0..kernel {
            for c in 0..channels {
                index.push((t * stride + j) * channels + c);
            }
        }
    }
    Some((frames, index))
}

/// Conv stack over a `S × 1` waveform. Each layer is
/// `GELU(unfold(x) · W + b)` with `W` of shape `(kernel · C_in) × C_out`.
pub fn conv_frontend<T: Real>(
    tape: &mut Tape<T>,
    waveform: Var,
    stack: &[ConvLayer],
    weights: &[(Var, Var)],
) -> Result<TokenSequence> {
    let (len, channels) = tape.shape(waveform);
    if channels != 1 {
        return Err(Error::Input(format!("waveform must be a single channel column, got {len}×{channels}")));
    }
    let min = min_waveform_len(stack);
    if len < min {
        return Err(Error::Input(format!("waveform of {len} samples is shorter than the minimum {min}")));
    }
    let mut x = waveform;
    let mut in_channels = 1;
    for (layer, &(w, b)) in stack.iter().zip(weights) {
        let (cur_len, _) = tape.shape(x);
        let (frames, index) = unfold_index(cur_len, in_channels, layer.kernel, layer.stride)
            .ok_or_else(|| Error::Input(format!("waveform shorter than the minimum {min}")))?;
        let gathered = index.into_iter().map(Some).collect();
        let cols = tape.gather(x, gathered, frames, layer.kernel * in_channels)?;
        let conv = tape.matmul(cols, w)?;
        let biased = tape.add(conv, b)?;
        x = tape.gelu(biased)?;
        in_channels = layer.channels;
    }
    Ok(TokenSequence { tokens: x, has_class_token: false, layer: 1 })
}
