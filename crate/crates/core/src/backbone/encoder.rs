//! Pre-norm transformer encoder layer with an optional residual adapter:
//!
//! ```text
//! B = Att(Norm(X)) + X
//! A = adapter(B)            (zero when no adapter is attached)
//! Y = MLP(Norm(B)) + B + A
//! ```

use super::TokenSequence;
use crate::numerics::{Real, Tape, Var};
use crate::tuning::{adapter_forward, AdapterVars};
use crate::Result;

/// Tape handles for one encoder layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub norm1_gamma: Var,
    pub norm1_beta: Var,
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub norm2_gamma: Var,
    pub norm2_beta: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub(crate) fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add(y, b)?)
}

/// Multi-head scaled dot-product self-attention over the rows of `x`.
pub fn attention<T: Real>(tape: &mut Tape<T>, x: Var, layer: &LayerVars, num_heads: usize) -> Result<Var> {
    let q = linear(tape, x, layer.wq, layer.bq)?;
    let k = linear(tape, x, layer.wk, layer.bk)?;
    let v = linear(tape, x, layer.wv, layer.bv)?;
    let width = tape.shape(q).1;
    let head_dim = width / num_heads;
    let scale = T::one() / T::from_usize(head_dim).unwrap().sqrt();

    let (qt, kt, vt) = (tape.transpose(q)?, tape.transpose(k)?, tape.transpose(v)?);
    let mut out: Option<Var> = None;
    for h in 0..num_heads {
        let start = h * head_dim;
        let qh_t = tape.slice_rows(qt, start, head_dim)?;
        let qh = tape.transpose(qh_t)?;
        let kh_t = tape.slice_rows(kt, start, head_dim)?;
        let vh_t = tape.slice_rows(vt, start, head_dim)?;
        let vh = tape.transpose(vh_t)?;
        let scores = tape.matmul(qh, kh_t)?;
        let scores = tape.scale(scores, scale)?;
        let probs = tape.softmax_rows(scores)?;
        let ctx = tape.matmul(probs, vh)?;
        // Output projection split by head: sum_h ctx_h · W_o[h rows].
        let wo_h = tape.slice_rows(layer.wo, start, head_dim)?;
        let proj = tape.matmul(ctx, wo_h)?;
        out = Some(match out {
            Some(acc) => tape.add(acc, proj)?,
            None => proj,
        });
    }
    let out = out.expect("at least one head");
    Ok(tape.add(out, layer.bo)?)
}

pub fn mlp<T: Real>(tape: &mut Tape<T>, x: Var, layer: &LayerVars) -> Result<Var> {
    let hidden = linear(tape, x, layer.w1, layer.b1)?;
    let hidden = tape.gelu(hidden)?;
    linear(tape, hidden, layer.w2, layer.b2)
}

pub fn encoder_layer<T: Real>(
    tape: &mut Tape<T>,
    seq: &TokenSequence,
    layer: &LayerVars,
    num_heads: usize,
    adapter: Option<&AdapterVars>,
) -> Result<TokenSequence> {
    let x = seq.tokens;
    let normed = tape.layer_norm(x, Some((layer.norm1_gamma, layer.norm1_beta)))?;
    let attended = attention(tape, normed, layer, num_heads)?;
    let b = tape.add(attended, x)?;

    let normed = tape.layer_norm(b, Some((layer.norm2_gamma, layer.norm2_beta)))?;
    let m = mlp(tape, normed, layer)?;
    let mut out = tape.add(m, b)?;
    if let Some(adapter) = adapter {
        let a = adapter_forward(tape, b, adapter)?;
        out = tape.add(out, a)?;
    }
    Ok(TokenSequence { tokens: out, has_class_token: seq.has_class_token, layer: seq.layer + 1 })
}
