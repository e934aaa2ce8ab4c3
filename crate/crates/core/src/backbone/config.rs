use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Spectrogram patches, classification token readout.
    AstLike,
    /// Strided conv frontend on waveforms, mean ⊕ std pooling readout.
    W2v2Like,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub depth: usize,
    pub width: usize,
    pub mlp_hidden: usize,
    pub num_heads: usize,
    /// `(frequency, time)` patch extent; ast_like only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<(usize, usize)>,
    /// Frequency bins of the input spectrogram; ast_like only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_bins: Option<usize>,
    /// w2v2_like only. The last layer's channel count must equal `width`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conv_stack: Vec<ConvLayer>,
    /// Longest token sequence (excluding the classification token) the
    /// positional table covers.
    pub max_sequence: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.mlp_hidden == 0 || self.num_heads == 0 || self.max_sequence == 0 {
            return fail("width, mlp_hidden, num_heads and max_sequence must be positive".into());
        }
        if self.width % self.num_heads != 0 {
            return fail(format!("width {} not divisible by {} heads", self.width, self.num_heads));
        }
        match self.kind {
            BackboneKind::AstLike => {
                match self.patch_size {
                    Some((pf, pt)) if pf > 0 && pt > 0 => {}
                    Some(_) => return fail("patch_size entries must be positive".into()),
                    None => return fail("ast_like backbone requires patch_size".into()),
                }
                match (self.freq_bins, self.patch_size) {
                    (Some(f), Some((pf, _))) if f > 0 && f % pf == 0 => {}
                    (Some(f), _) => return fail(format!("freq_bins {f} must be a positive multiple of the patch height")),
                    (None, _) => return fail("ast_like backbone requires freq_bins".into()),
                }
            }
            BackboneKind::W2v2Like => {
                let Some(last) = self.conv_stack.last() else {
                    return fail("w2v2_like backbone requires a non-empty conv_stack".into());
                };
                if self.conv_stack.iter().any(|c| c.channels == 0 || c.kernel == 0 || c.stride == 0) {
                    return fail("conv_stack entries must be positive".into());
                }
                if last.channels != self.width {
                    return fail(format!(
                        "last conv layer has {} channels but width is {}",
                        last.channels, self.width
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn head_dims(&self) -> usize {
        match self.kind {
            BackboneKind::AstLike => self.width,
            BackboneKind::W2v2Like => 2 * self.width,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.num_heads
    }

    /// AST-base geometry: 12 layers, width 768, 16×16 patches.
    pub fn ast_base() -> Self {
        Self {
            kind: BackboneKind::AstLike,
            depth: 12,
            width: 768,
            mlp_hidden: 3072,
            num_heads: 12,
            patch_size: Some((16, 16)),
            freq_bins: Some(128),
            conv_stack: Vec::new(),
            max_sequence: 1212,
            seed: 0,
        }
    }

    /// Small AST-like encoder for 8×8 spectrograms.
    pub fn desk_ast() -> Self {
        Self {
            kind: BackboneKind::AstLike,
            depth: 2,
            width: 16,
            mlp_hidden: 32,
            num_heads: 2,
            patch_size: Some((4, 4)),
            freq_bins: Some(8),
            conv_stack: Vec::new(),
            max_sequence: 16,
            seed: 0,
        }
    }

    /// Small W2V2-like encoder for 64-sample waveforms.
    pub fn desk_w2v2() -> Self {
        Self {
            kind: BackboneKind::W2v2Like,
            depth: 2,
            width: 16,
            mlp_hidden: 32,
            num_heads: 2,
            patch_size: None,
            freq_bins: None,
            conv_stack: vec![
                ConvLayer { channels: 8, kernel: 8, stride: 4 },
                ConvLayer { channels: 16, kernel: 4, stride: 2 },
            ],
            max_sequence: 16,
            seed: 0,
        }
    }
}
