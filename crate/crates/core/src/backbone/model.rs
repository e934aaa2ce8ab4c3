use super::config::{BackboneConfig, BackboneKind};
use super::encoder::{encoder_layer, linear, LayerVars};
use super::frontend::{conv_frontend, embed_patches, patchify_on_tape, spectrogram_dims};
use super::TokenSequence;
use crate::numerics::{Real, SeededRng, Tape, Tensor, Var};
use crate::tuning::{ep_layer_forward, input_prompt_index, AdapterVars, TuningSpec};
use crate::{Error, Result};

// RNG streams; one per parameter family so that attaching a method never
// shifts the initial values of another.
pub(crate) const STREAM_BACKBONE: u64 = 1;
pub(crate) const STREAM_HEAD: u64 = 2;
pub(crate) const STREAM_PROMPTS: u64 = 3;
pub(crate) const STREAM_ADAPTERS: u64 = 4;

/// Raw model input.
#[derive(Clone, Debug, PartialEq)]
pub enum Input<T> {
    /// `F × T` log-Mel spectrogram.
    Spectrogram(Tensor<T>),
    /// Mono waveform of `S` samples.
    Waveform(Tensor<T>),
}

impl<T: Real> Input<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        match self {
            Input::Spectrogram(t) | Input::Waveform(t) => t,
        }
    }

    pub fn cast<U: Real>(&self) -> Input<U> {
        match self {
            Input::Spectrogram(t) => Input::Spectrogram(t.cast()),
            Input::Waveform(t) => Input::Waveform(t.cast()),
        }
    }
}

/// A named parameter tensor. `tensor.requires_grad()` is its trainable flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub group: String,
    pub tensor: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn trainable(&self) -> bool {
        self.tensor.requires_grad()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum FrontendIds {
    Patch { weight: usize, bias: usize, class_token: usize },
    Conv { layers: Vec<(usize, usize)>, norm_gamma: usize, norm_beta: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LayerIds([usize; 16]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct AdapterIds {
    pub w_down: usize,
    pub b_down: Option<usize>,
    pub w_up: usize,
    pub b_up: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub frontend: FrontendIds,
    pub positional: usize,
    pub layers: Vec<LayerIds>,
    pub head_weight: usize,
    pub head_bias: usize,
    pub input_prompt: Option<usize>,
    pub prompts: Vec<usize>,
    pub adapters: Vec<AdapterIds>,
}

/// Output of a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub logits: Var,
    /// Pre-head representation: classification token (ast_like) or
    /// mean ⊕ std pooling (w2v2_like).
    pub representation: Var,
}

/// Backbone plus head, and any parameters added by a tuning method.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: BackboneConfig,
    num_classes: usize,
    pub(crate) tuning: Option<TuningSpec>,
    pub(crate) params: Vec<Param<T>>,
    pub(crate) layout: Layout,
}

struct Builder<'a, T> {
    params: &'a mut Vec<Param<T>>,
    rng: SeededRng,
}

impl<T: Real> Builder<'_, T> {
    fn add(&mut self, name: String, group: &str, shape: Vec<usize>, values: Vec<f64>) -> usize {
        let data = values.into_iter().map(T::lit).collect();
        let tensor = Tensor::new(shape, data).expect("builder shapes are positive").with_grad(true);
        self.params.push(Param { name, group: group.to_string(), tensor });
        self.params.len() - 1
    }

    fn uniform(&mut self, name: String, group: &str, rows: usize, cols: usize, bound: f64) -> usize {
        let v = self.rng.uniform_vec(rows * cols, bound);
        self.add(name, group, vec![rows, cols], v)
    }

    fn constant(&mut self, name: String, group: &str, cols: usize, value: f64) -> usize {
        self.add(name, group, vec![1, cols], vec![value; cols])
    }

    fn linear(&mut self, name: &str, group: &str, fan_in: usize, fan_out: usize) -> (usize, usize) {
        let w = self.uniform(format!("{name}.weight"), group, fan_in, fan_out, 1.0 / (fan_in as f64).sqrt());
        let b = self.constant(format!("{name}.bias"), group, fan_out, 0.0);
        (w, b)
    }
}

impl<T: Real> Model<T> {
    /// Builds a randomly initialised backbone and a `num_classes`-way head.
    /// All parameters start trainable; [`crate::tuning::attach`] freezes them.
    pub fn new(config: BackboneConfig, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 {
            return Err(Error::Config("head needs at least one class".into()));
        }
        let d = config.width;
        let mut params = Vec::new();
        let mut b = Builder { params: &mut params, rng: SeededRng::new(config.seed, STREAM_BACKBONE) };

        let frontend = match config.kind {
            BackboneKind::AstLike => {
                let (pf, pt) = config.patch_size.expect("validated");
                let (weight, bias) = b.linear("frontend.patch", "frontend", pf * pt, d);
                let cls = b.rng.uniform_vec(d, 0.02);
                let class_token = b.add("cls_token".into(), "cls_token", vec![1, d], cls);
                FrontendIds::Patch { weight, bias, class_token }
            }
            BackboneKind::W2v2Like => {
                let mut in_ch = 1;
                let mut layers = Vec::new();
                for (i, c) in config.conv_stack.iter().enumerate() {
                    layers.push(b.linear(&format!("frontend.conv{i}"), "frontend", c.kernel * in_ch, c.channels));
                    in_ch = c.channels;
                }
                let norm_gamma = b.constant("frontend_norm.gamma".into(), "frontend_norm", d, 1.0);
                let norm_beta = b.constant("frontend_norm.beta".into(), "frontend_norm", d, 0.0);
                FrontendIds::Conv { layers, norm_gamma, norm_beta }
            }
        };
        let positional = b.uniform("positional".into(), "positional", config.max_sequence + 1, d, 0.02);

        let mut layers = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let g = format!("encoder.{i}");
            let p = |s: &str| format!("encoder.{i}.{s}");
            let n1g = b.constant(p("norm1.gamma"), &g, d, 1.0);
            let n1b = b.constant(p("norm1.beta"), &g, d, 0.0);
            let (wq, bq) = b.linear(&p("attn.q"), &g, d, d);
            let (wk, bk) = b.linear(&p("attn.k"), &g, d, d);
            let (wv, bv) = b.linear(&p("attn.v"), &g, d, d);
            let (wo, bo) = b.linear(&p("attn.out"), &g, d, d);
            let n2g = b.constant(p("norm2.gamma"), &g, d, 1.0);
            let n2b = b.constant(p("norm2.beta"), &g, d, 0.0);
            let (w1, b1) = b.linear(&p("mlp.fc1"), &g, d, config.mlp_hidden);
            let (w2, b2) = b.linear(&p("mlp.fc2"), &g, config.mlp_hidden, d);
            layers.push(LayerIds([n1g, n1b, wq, bq, wk, bk, wv, bv, wo, bo, n2g, n2b, w1, b1, w2, b2]));
        }

        b.rng = SeededRng::new(config.seed, STREAM_HEAD);
        let (head_weight, head_bias) = b.linear("head", "head", config.head_dims(), num_classes);

        let layout = Layout {
            frontend,
            positional,
            layers,
            head_weight,
            head_bias,
            input_prompt: None,
            prompts: Vec::new(),
            adapters: Vec::new(),
        };
        Ok(Self { config, num_classes, tuning: None, params, layout })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn tuning(&self) -> Option<&TuningSpec> {
        self.tuning.as_ref()
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// `true` where the parameter is frozen.
    pub fn freeze_mask(&self) -> Vec<bool> {
        self.params.iter().map(|p| !p.trainable()).collect()
    }

    /// Most tokens a layer may attend over: the positional table's rows.
    pub fn context_capacity(&self) -> usize {
        self.config.max_sequence + 1
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Same model in another precision, trainable flags preserved.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            num_classes: self.num_classes,
            tuning: self.tuning.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), group: p.group.clone(), tensor: p.tensor.cast() })
                .collect(),
            layout: self.layout.clone(),
        }
    }

    /// Registers every parameter on `tape`; frozen ones as gradient-free leaves.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.tensor.clone())).collect()
    }

    pub fn forward(&self, tape: &mut Tape<T>, input: &Input<T>) -> Result<Forward> {
        let vars = self.bind(tape);
        self.forward_bound(tape, &vars, input)
    }

    /// Handles of encoder layer `i` among `vars` from [`Model::bind`].
    pub fn layer_vars(&self, vars: &[Var], i: usize) -> LayerVars {
        let v = self.layout.layers[i].0.map(|id| vars[id]);
        LayerVars {
            norm1_gamma: v[0],
            norm1_beta: v[1],
            wq: v[2],
            bq: v[3],
            wk: v[4],
            bk: v[5],
            wv: v[6],
            bv: v[7],
            wo: v[8],
            bo: v[9],
            norm2_gamma: v[10],
            norm2_beta: v[11],
            w1: v[12],
            b1: v[13],
            w2: v[14],
            b2: v[15],
        }
    }

    /// Adapter handles of layer `i`, if adapters are attached.
    pub fn adapter_vars(&self, vars: &[Var], i: usize) -> Option<AdapterVars> {
        let ids = self.layout.adapters.get(i)?;
        let scale = self.tuning.as_ref().map_or(0.1, |t| t.s);
        Some(AdapterVars {
            w_down: vars[ids.w_down],
            b_down: ids.b_down.map(|j| vars[j]),
            w_up: vars[ids.w_up],
            b_up: ids.b_up.map(|j| vars[j]),
            scale,
        })
    }

    /// Input (after any input prompt) through the frontend, positional
    /// embeddings added.
    pub fn embed(&self, tape: &mut Tape<T>, vars: &[Var], input: &Input<T>) -> Result<TokenSequence> {
        let d = self.config.width;
        let raw = match (self.config.kind, input) {
            (BackboneKind::AstLike, Input::Spectrogram(x)) => {
                let (f, t) = spectrogram_dims(x)?;
                if Some(f) != self.config.freq_bins {
                    return Err(Error::Input(format!(
                        "spectrogram has {f} frequency bins, backbone expects {:?}",
                        self.config.freq_bins
                    )));
                }
                tape.constant(f, t, x.data().to_vec())?
            }
            (BackboneKind::W2v2Like, Input::Waveform(x)) => {
                if x.shape().len() != 1 && x.dims2().0 != 1 {
                    return Err(Error::Input(format!("waveform must be 1-D, got shape {:?}", x.shape())));
                }
                tape.constant(x.numel(), 1, x.data().to_vec())?
            }
            (kind, _) => return Err(Error::Input(format!("input kind does not match {kind:?} backbone"))),
        };
        let prompted = match self.layout.input_prompt {
            Some(id) => {
                let (rows, cols) = tape.shape(raw);
                let ip_len = self.tuning.as_ref().map_or(0, |t| t.ip_len);
                let index = input_prompt_index(self.config.kind, rows, cols, ip_len)?;
                tape.scatter_add(raw, vars[id], index)?
            }
            None => raw,
        };
        let mut seq = match &self.layout.frontend {
            FrontendIds::Patch { weight, bias, class_token } => {
                let patch = self.config.patch_size.expect("validated");
                let patches = patchify_on_tape(tape, prompted, patch)?;
                embed_patches(tape, patches, vars[*weight], vars[*bias], Some(vars[*class_token]))?
            }
            FrontendIds::Conv { layers, norm_gamma, norm_beta } => {
                let weights: Vec<(Var, Var)> = layers.iter().map(|&(w, b)| (vars[w], vars[b])).collect();
                let mut seq = conv_frontend(tape, prompted, &self.config.conv_stack, &weights)?;
                seq.tokens = tape.layer_norm(seq.tokens, Some((vars[*norm_gamma], vars[*norm_beta])))?;
                seq
            }
        };
        let rows = tape.shape(seq.tokens).0;
        let limit = self.config.max_sequence + usize::from(seq.has_class_token);
        if rows > limit {
            return Err(Error::Input(format!(
                "{} tokens exceed max_sequence {}",
                rows - usize::from(seq.has_class_token),
                self.config.max_sequence
            )));
        }
        debug_assert_eq!(tape.shape(seq.tokens).1, d);
        let pos = tape.slice_rows(vars[self.layout.positional], 0, rows)?;
        seq.tokens = tape.add(seq.tokens, pos)?;
        Ok(seq)
    }

    /// Runs the encoder stack, with per-layer prompts and adapters when attached.
    pub fn encode(&self, tape: &mut Tape<T>, vars: &[Var], mut seq: TokenSequence) -> Result<TokenSequence> {
        for i in 0..self.config.depth {
            let layer = self.layer_vars(vars, i);
            let adapter = self.adapter_vars(vars, i);
            seq = match self.layout.prompts.get(i) {
                Some(&r) => ep_layer_forward(
                    tape,
                    &seq,
                    Some(vars[r]),
                    &layer,
                    self.config.num_heads,
                    self.context_capacity(),
                    adapter.as_ref(),
                )?,
                None => encoder_layer(tape, &seq, &layer, self.config.num_heads, adapter.as_ref())?,
            };
        }
        Ok(seq)
    }

    /// Pre-head readout of the final sequence.
    pub fn readout(&self, tape: &mut Tape<T>, seq: &TokenSequence) -> Result<Var> {
        match self.config.kind {
            BackboneKind::AstLike => Ok(tape.slice_rows(seq.tokens, 0, 1)?),
            BackboneKind::W2v2Like => mean_std_pool(tape, seq.tokens),
        }
    }

    pub fn forward_bound(&self, tape: &mut Tape<T>, vars: &[Var], input: &Input<T>) -> Result<Forward> {
        if vars.len() != self.params.len() {
            return Err(Error::Config(format!("{} vars bound for {} params", vars.len(), self.params.len())));
        }
        let seq = self.embed(tape, vars, input)?;
        let seq = self.encode(tape, vars, seq)?;
        let representation = self.readout(tape, &seq)?;
        let logits = linear(tape, representation, vars[self.layout.head_weight], vars[self.layout.head_bias])?;
        Ok(Forward { logits, representation })
    }

    /// Convenience: logits as plain values, no gradients.
    pub fn logits(&self, input: &Input<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input)?;
        Ok(tape.data(out.logits).to_vec())
    }
}

/// Temporal mean and standard deviation of `m × d` frames, concatenated to 1 × 2d.
pub fn mean_std_pool<T: Real>(tape: &mut Tape<T>, frames: Var) -> Result<Var> {
    let mean = tape.mean_rows(frames)?;
    let std = tape.stddev_rows(frames)?;
    let (mt, st) = (tape.transpose(mean)?, tape.transpose(std)?);
    let stacked = tape.concat_rows(&[mt, st])?;
    Ok(tape.transpose(stacked)?)
}
