//! Input prompt (IP): a learnable additive overlay on the raw input. For
//! spectrograms it covers every frequency bin of the first `ip_len` time
//! frames; for waveforms, the first `ip_len` samples.

use crate::backbone::{BackboneConfig, BackboneKind, Input};
use crate::numerics::{Real, Tensor};
use crate::{Error, Result};

/// Shape of the IP parameter tensor.
pub fn input_prompt_shape(config: &BackboneConfig, ip_len: usize) -> (usize, usize) {
    match config.kind {
        BackboneKind::AstLike => (config.freq_bins.unwrap_or(0), ip_len),
        BackboneKind::W2v2Like => (ip_len, 1),
    }
}

/// Flat positions in a `rows × cols` input (spectrogram `F × T`, or waveform
/// `S × 1`) covered by the prompt, in the prompt's own row-major order.
pub fn input_prompt_index(kind: BackboneKind, rows: usize, cols: usize, ip_len: usize) -> Result<Vec<usize>> {
    match kind {
        BackboneKind::AstLike => {
            if ip_len > cols {
                return Err(Error::Config(format!("input prompt of {ip_len} frames exceeds {cols}-frame input")));
            }
            Ok((0..rows).flat_map(|f| (0..ip_len).map(move |j| f * cols + j)).collect())
        }
        BackboneKind::W2v2Like => {
            if ip_len > rows {
                return Err(Error::Config(format!("input prompt of {ip_len} samples exceeds {rows}-sample input")));
            }
            Ok((0..ip_len).collect())
        }
    }
}

/// Adds `prompt` over its region of `input`. Entries outside the region are
/// copied bit for bit.
pub fn apply_input_prompt<T: Real>(input: &Input<T>, prompt: &Tensor<T>) -> Result<Input<T>> {
    let (kind, x) = match input {
        Input::Spectrogram(x) => (BackboneKind::AstLike, x),
        Input::Waveform(x) => (BackboneKind::W2v2Like, x),
    };
    let (rows, cols) = match kind {
        BackboneKind::AstLike => x.dims2(),
        BackboneKind::W2v2Like => (x.numel(), 1),
    };
    let (pr, pc) = match kind {
        BackboneKind::AstLike => prompt.dims2(),
        BackboneKind::W2v2Like => (prompt.numel(), 1),
    };
    let ip_len = match kind {
        BackboneKind::AstLike => pc,
        BackboneKind::W2v2Like => pr,
    };
    if kind == BackboneKind::AstLike && pr != rows {
        return Err(Error::Config(format!("prompt covers {pr} bins, input has {rows}")));
    }
    let index = input_prompt_index(kind, rows, cols, ip_len)?;
    let mut out = x.clone();
    let data = out.data_mut();
    for (&j, &p) in index.iter().zip(prompt.data()) {
        data[j] = data[j] + p;
    }
    Ok(match kind {
        BackboneKind::AstLike => Input::Spectrogram(out),
        BackboneKind::W2v2Like => Input::Waveform(out),
    })
}
