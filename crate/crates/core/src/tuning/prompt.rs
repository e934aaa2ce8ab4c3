use crate::backbone::{encoder_layer, LayerVars, TokenSequence};
use crate::numerics::{Real, Tape, Var};
use crate::tuning::AdapterVars;
use crate::{Error, Result};

/// One prompted encoder layer: runs the layer on `[R, x, E]` and drops the
/// first `k` output rows, so the returned sequence has the input's length.
/// `prompts = None` is the k = 0 case and reduces to the plain layer.
pub fn ep_layer_forward<T: Real>(
    tape: &mut Tape<T>,
    seq: &TokenSequence,
    prompts: Option<Var>,
    layer: &LayerVars,
    num_heads: usize,
    capacity: usize,
    adapter: Option<&AdapterVars>,
) -> Result<TokenSequence> {
    let Some(prompts) = prompts else {
        return encoder_layer(tape, seq, layer, num_heads, adapter);
    };
    let (k, pw) = tape.shape(prompts);
    let (n, w) = tape.shape(seq.tokens);
    if pw != w {
        return Err(crate::numerics::TensorError::Dimension {
            op: "ep_layer_forward",
            shapes: vec![vec![k, pw], vec![n, w]],
        }
        .into());
    }
    if k >= capacity {
        return Err(Error::Config(format!("{k} prompts reach the attention capacity of {capacity} tokens")));
    }
    let joined = tape.concat_rows(&[prompts, seq.tokens])?;
    let prompted = TokenSequence { tokens: joined, ..*seq };
    let out = encoder_layer(tape, &prompted, layer, num_heads, adapter)?;
    let kept = tape.slice_rows(out.tokens, k, n)?;
    Ok(TokenSequence { tokens: kept, ..out })
}
