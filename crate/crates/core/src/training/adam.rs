use crate::backbone::Model;
use crate::numerics::Real;
use crate::{Error, Result};

/// Adam moments for the trainable parameters of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: usize,
    /// Indexed like the model's parameters; `None` for frozen ones.
    m: Vec<Option<Vec<T>>>,
    v: Vec<Option<Vec<T>>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(model: &Model<T>, lr: T, beta1: T, beta2: T, eps: T) -> Self {
        let moments = || {
            model
                .params()
                .iter()
                .map(|p| p.trainable().then(|| vec![T::zero(); p.tensor.numel()]))
                .collect::<Vec<_>>()
        };
        Self { lr, beta1, beta2, eps, step: 0, m: moments(), v: moments() }
    }

    /// `lr` with the usual `β₁ = 0.9, β₂ = 0.999, ε = 1e-8`.
    pub fn with_defaults(model: &Model<T>, lr: T) -> Self {
        Self::new(model, lr, T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn first_moment(&self, param: usize) -> Option<&[T]> {
        self.m.get(param)?.as_deref()
    }

    pub fn second_moment(&self, param: usize) -> Option<&[T]> {
        self.v.get(param)?.as_deref()
    }
}

/// One bias-corrected Adam update. `grads` is indexed like the model's
/// parameters and must hold a gradient for exactly the trainable ones.
pub fn adam_step<T: Real>(state: &mut OptimizerState<T>, model: &mut Model<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
    if grads.len() != model.params().len() || state.m.len() != grads.len() {
        return Err(Error::Confinement(format!(
            "{} gradients for {} parameters ({} optimizer slots)",
            grads.len(),
            model.params().len(),
            state.m.len()
        )));
    }
    for (p, g) in model.params().iter().zip(grads) {
        match (p.trainable(), g) {
            (false, Some(_)) => return Err(Error::Confinement(format!("gradient on frozen parameter {}", p.name))),
            (true, None) => return Err(Error::Confinement(format!("no gradient for trainable parameter {}", p.name))),
            (true, Some(g)) if g.len() != p.tensor.numel() => {
                return Err(Error::Confinement(format!(
                    "gradient for {} has {} entries, parameter has {}",
                    p.name,
                    g.len(),
                    p.tensor.numel()
                )))
            }
            _ => {}
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        let (Some(g), Some(m), Some(v)) = (&grads[i], state.m[i].as_mut(), state.v[i].as_mut()) else {
            continue;
        };
        for (((w, &g), m), v) in p.tensor.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w = *w - state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
