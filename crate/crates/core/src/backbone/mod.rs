//! Miniature AST-style and W2V2-style encoders.

mod config;
mod encoder;
mod frontend;
mod model;

use crate::numerics::Var;

pub use config::{BackboneConfig, BackboneKind, ConvLayer};
pub use encoder::{attention, encoder_layer, mlp, LayerVars};
pub use frontend::{
    conv_frontend, conv_output_len, embed_patches, min_waveform_len, padded_time, patch_index, patchify,
    unfold_index,
};
pub use model::{mean_std_pool, Forward, Input, Model, Param};
pub(crate) use model::{AdapterIds, STREAM_ADAPTERS, STREAM_PROMPTS};

/// Token rows flowing through the encoder. When `has_class_token` is set,
/// row 0 is the classification token and the rest are the embeddings.
#[derive(Clone, Copy, Debug)]
pub struct TokenSequence {
    pub tokens: Var,
    pub has_class_token: bool,
    /// 1-based index of the layer this sequence feeds.
    pub layer: usize,
}
