use super::input_prompt::input_prompt_shape;
use super::{Method, TuningSpec};
use crate::backbone::{AdapterIds, Model, Param, STREAM_ADAPTERS, STREAM_PROMPTS};
use crate::numerics::{Real, SeededRng, Tensor};
use crate::{Error, Result};

fn push<T: Real>(model: &mut Model<T>, name: String, group: &str, rows: usize, cols: usize, values: Vec<f64>) -> usize {
    let data = values.into_iter().map(T::lit).collect();
    let tensor = Tensor::matrix(rows, cols, data).expect("positive attach shapes").with_grad(true);
    model.params.push(Param { name, group: group.into(), tensor });
    model.params.len() - 1
}

/// Freezes the backbone according to `spec` and adds the method's own
/// parameters. Afterwards the trainable set is:
///
/// | method  | trainable                        |
/// |---------|----------------------------------|
/// | FT      | everything                       |
/// | LP      | head                             |
/// | IP      | input prompt + head              |
/// | EP      | prompts + head                   |
/// | Adapter | adapters + head                  |
/// | IPET    | prompts + adapters + head        |
///
/// Prompts are drawn from U(-1/√d, 1/√d). Adapters start with `W_up = 0` and
/// zero biases, so attaching them leaves the logits unchanged. The input
/// prompt starts at zero for the same reason.
pub fn attach<T: Real>(mut model: Model<T>, spec: &TuningSpec) -> Result<Model<T>> {
    spec.validate()?;
    if model.tuning.is_some() {
        return Err(Error::Config("model already has a tuning method attached".into()));
    }
    let cfg = model.config().clone();
    let (depth, d) = (cfg.depth, cfg.width);
    if depth == 0 && (spec.method.uses_prompts() || spec.method.uses_adapters()) {
        return Err(Error::Config(format!("{} needs at least one encoder layer", spec.method)));
    }
    if spec.method.uses_prompts() && spec.k >= model.context_capacity() {
        return Err(Error::Config(format!(
            "k = {} reaches the attention capacity of {} tokens",
            spec.k,
            model.context_capacity()
        )));
    }

    let train_backbone = spec.method == Method::Ft;
    let head = (model.layout.head_weight, model.layout.head_bias);
    for (i, p) in model.params.iter_mut().enumerate() {
        let trainable = train_backbone || i == head.0 || i == head.1;
        p.tensor = std::mem::replace(&mut p.tensor, Tensor::scalar(T::zero())).with_grad(trainable);
    }

    if spec.method.uses_input_prompt() {
        let (rows, cols) = input_prompt_shape(&cfg, spec.ip_len);
        let id = push(&mut model, "input_prompt".into(), "input_prompt", rows, cols, vec![0.0; rows * cols]);
        model.layout.input_prompt = Some(id);
    }
    if spec.method.uses_prompts() {
        let mut rng = SeededRng::new(cfg.seed, STREAM_PROMPTS);
        let bound = 1.0 / (d as f64).sqrt();
        for i in 0..depth {
            let values = rng.uniform_vec(spec.k * d, bound);
            let id = push(&mut model, format!("prompts.{i}"), "prompts", spec.k, d, values);
            model.layout.prompts.push(id);
        }
    }
    if spec.method.uses_adapters() {
        let mut rng = SeededRng::new(cfg.seed, STREAM_ADAPTERS);
        let bound = 1.0 / (d as f64).sqrt();
        let h = spec.h;
        for i in 0..depth {
            let down = rng.uniform_vec(d * h, bound);
            let w_down = push(&mut model, format!("adapters.{i}.down.weight"), "adapters", d, h, down);
            let b_down = spec
                .adapter_bias
                .then(|| push(&mut model, format!("adapters.{i}.down.bias"), "adapters", 1, h, vec![0.0; h]));
            let w_up = push(&mut model, format!("adapters.{i}.up.weight"), "adapters", h, d, vec![0.0; h * d]);
            let b_up = spec
                .adapter_bias
                .then(|| push(&mut model, format!("adapters.{i}.up.bias"), "adapters", 1, d, vec![0.0; d]));
            model.layout.adapters.push(AdapterIds { w_down, b_down, w_up, b_up });
        }
    }
    model.tuning = Some(spec.clone());
    Ok(model)
}
