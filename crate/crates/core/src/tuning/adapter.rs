use crate::numerics::{Real, Tape, Var};
use crate::Result;

/// Tape handles for one layer's adapter.
#[derive(Clone, Copy, Debug)]
pub struct AdapterVars {
    pub w_down: Var,
    pub b_down: Option<Var>,
    pub w_up: Var,
    pub b_up: Option<Var>,
    pub scale: f64,
}

/// `A = s · (ReLU(B · W_down + b_down) · W_up + b_up)`
pub fn adapter_forward<T: Real>(tape: &mut Tape<T>, b: Var, w: &AdapterVars) -> Result<Var> {
    let mut down = tape.matmul(b, w.w_down)?;
    if let Some(bias) = w.b_down {
        down = tape.add(down, bias)?;
    }
    let act = tape.relu(down)?;
    let mut up = tape.matmul(act, w.w_up)?;
    if let Some(bias) = w.b_up {
        up = tape.add(up, bias)?;
    }
    Ok(tape.scale(up, T::lit(w.scale))?)
}
