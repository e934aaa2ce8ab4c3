//! Plain nested-Vec reference implementations, written without the tape.

#![allow(dead_code)]

use ipet_core::backbone::Model;

pub type Mat = Vec<Vec<f64>>;

pub fn mat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    assert_eq!(data.len(), rows * cols);
    data.chunks(cols).map(<[f64]>::to_vec).collect()
}

pub fn flat(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k) = (b[0].len(), b.len());
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), k);
            (0..n).map(|j| (0..k).map(|p| row[p] * b[p][j]).sum()).collect()
        })
        .collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

pub fn add_row(a: &Mat, row: &[f64]) -> Mat {
    a.iter().map(|x| x.iter().zip(row).map(|(u, v)| u + v).collect()).collect()
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    a.iter().map(|x| x.iter().map(|v| v * s).collect()).collect()
}

pub fn map(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    a.iter().map(|x| x.iter().map(|&v| f(v)).collect()).collect()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn layer_norm(a: &Mat, gamma: &[f64], beta: &[f64]) -> Mat {
    a.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter().enumerate().map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * gamma[j] + beta[j]).collect()
        })
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Encoder weights copied out of a model, one layer.
pub struct LayerW {
    pub n1g: Vec<f64>,
    pub n1b: Vec<f64>,
    pub wq: Mat,
    pub bq: Vec<f64>,
    pub wk: Mat,
    pub bk: Vec<f64>,
    pub wv: Mat,
    pub bv: Vec<f64>,
    pub wo: Mat,
    pub bo: Vec<f64>,
    pub n2g: Vec<f64>,
    pub n2b: Vec<f64>,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

pub fn tensor(model: &Model<f64>, name: &str) -> Mat {
    let p = model.param(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let (r, c) = p.tensor.dims2();
    mat(r, c, p.tensor.data())
}

pub fn row(model: &Model<f64>, name: &str) -> Vec<f64> {
    model.param(name).unwrap_or_else(|| panic!("no parameter {name}")).tensor.data().to_vec()
}

pub fn layer_weights(model: &Model<f64>, i: usize) -> LayerW {
    let p = |s: &str| format!("encoder.{i}.{s}");
    LayerW {
        n1g: row(model, &p("norm1.gamma")),
        n1b: row(model, &p("norm1.beta")),
        wq: tensor(model, &p("attn.q.weight")),
        bq: row(model, &p("attn.q.bias")),
        wk: tensor(model, &p("attn.k.weight")),
        bk: row(model, &p("attn.k.bias")),
        wv: tensor(model, &p("attn.v.weight")),
        bv: row(model, &p("attn.v.bias")),
        wo: tensor(model, &p("attn.out.weight")),
        bo: row(model, &p("attn.out.bias")),
        n2g: row(model, &p("norm2.gamma")),
        n2b: row(model, &p("norm2.beta")),
        w1: tensor(model, &p("mlp.fc1.weight")),
        b1: row(model, &p("mlp.fc1.bias")),
        w2: tensor(model, &p("mlp.fc2.weight")),
        b2: row(model, &p("mlp.fc2.bias")),
    }
}

/// Multi-head attention with explicit per-head index loops and a single
/// output projection over the concatenated heads.
pub fn attention(x: &Mat, w: &LayerW, heads: usize) -> Mat {
    let q = add_row(&matmul(x, &w.wq), &w.bq);
    let k = add_row(&matmul(x, &w.wk), &w.bk);
    let v = add_row(&matmul(x, &w.wv), &w.bv);
    let (n, d) = (x.len(), w.wq[0].len());
    let dh = d / heads;
    let mut concat = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let p = softmax(&scores);
            for c in cols.clone() {
                concat[i][c] = (0..n).map(|j| p[j] * v[j][c]).sum();
            }
        }
    }
    add_row(&matmul(&concat, &w.wo), &w.bo)
}

pub fn mlp(x: &Mat, w: &LayerW) -> Mat {
    let h = map(&add_row(&matmul(x, &w.w1), &w.b1), gelu);
    add_row(&matmul(&h, &w.w2), &w.b2)
}

pub struct AdapterW {
    pub down: Mat,
    pub b_down: Vec<f64>,
    pub up: Mat,
    pub b_up: Vec<f64>,
    pub s: f64,
}

pub fn adapter_weights(model: &Model<f64>, i: usize, s: f64) -> AdapterW {
    let p = |x: &str| format!("adapters.{i}.{x}");
    AdapterW {
        down: tensor(model, &p("down.weight")),
        b_down: row(model, &p("down.bias")),
        up: tensor(model, &p("up.weight")),
        b_up: row(model, &p("up.bias")),
        s,
    }
}

pub fn adapter(b: &Mat, a: &AdapterW) -> Mat {
    let hidden = map(&add_row(&matmul(b, &a.down), &a.b_down), relu);
    scale(&add_row(&matmul(&hidden, &a.up), &a.b_up), a.s)
}

pub fn encoder_layer(x: &Mat, w: &LayerW, heads: usize, ad: Option<&AdapterW>) -> Mat {
    let b = add(&attention(&layer_norm(x, &w.n1g, &w.n1b), w, heads), x);
    let out = add(&mlp(&layer_norm(&b, &w.n2g, &w.n2b), w), &b);
    match ad {
        Some(a) => add(&out, &adapter(&b, a)),
        None => out,
    }
}

pub fn prompted_layer(x: &Mat, prompts: &Mat, w: &LayerW, heads: usize, ad: Option<&AdapterW>) -> Mat {
    let joined: Mat = prompts.iter().chain(x.iter()).cloned().collect();
    encoder_layer(&joined, w, heads, ad)[prompts.len()..].to_vec()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Reference forward pass for any attached model. Returns
/// `(representation, logits)`.
pub fn forward(model: &Model<f64>, input: &ipet_core::backbone::Input<f64>) -> (Vec<f64>, Vec<f64>) {
    use ipet_core::backbone::{BackboneKind, Input};
    let cfg = model.config();
    let d = cfg.width;
    let spec = model.tuning().cloned();
    let ip = model.param("input_prompt").map(|p| p.tensor.data().to_vec());

    let tokens: Mat = match (cfg.kind, input) {
        (BackboneKind::AstLike, Input::Spectrogram(x)) => {
            let (f, t) = x.dims2();
            let mut s = mat(f, t, x.data());
            if let Some(p) = &ip {
                let len = spec.as_ref().unwrap().ip_len;
                for (fi, r) in s.iter_mut().enumerate() {
                    for j in 0..len {
                        r[j] += p[fi * len + j];
                    }
                }
            }
            let (pf, pt) = cfg.patch_size.unwrap();
            let cols = t.div_ceil(pt);
            let mut patches = Vec::new();
            for pr in 0..f / pf {
                for pc in 0..cols {
                    let mut v = Vec::new();
                    for i in 0..pf {
                        for j in 0..pt {
                            let tt = pc * pt + j;
                            v.push(if tt < t { s[pr * pf + i][tt] } else { 0.0 });
                        }
                    }
                    patches.push(v);
                }
            }
            let emb = add_row(&matmul(&patches, &tensor(model, "frontend.patch.weight")), &row(model, "frontend.patch.bias"));
            std::iter::once(row(model, "cls_token")).chain(emb).collect()
        }
        (BackboneKind::W2v2Like, Input::Waveform(x)) => {
            let mut w: Vec<f64> = x.data().to_vec();
            if let Some(p) = &ip {
                for (j, v) in p.iter().enumerate() {
                    w[j] += v;
                }
            }
            let mut sig: Mat = w.iter().map(|&v| vec![v]).collect();
            for (li, c) in cfg.conv_stack.iter().enumerate() {
                let wt = tensor(model, &format!("frontend.conv{li}.weight"));
                let b = row(model, &format!("frontend.conv{li}.bias"));
                let cin = sig[0].len();
                let frames = (sig.len() - c.kernel) / c.stride + 1;
                sig = (0..frames)
                    .map(|t| {
                        (0..c.channels)
                            .map(|o| {
                                let mut acc = b[o];
                                for j in 0..c.kernel {
                                    for ch in 0..cin {
                                        acc += sig[t * c.stride + j][ch] * wt[j * cin + ch][o];
                                    }
                                }
                                gelu(acc)
                            })
                            .collect()
                    })
                    .collect();
            }
            layer_norm(&sig, &row(model, "frontend_norm.gamma"), &row(model, "frontend_norm.beta"))
        }
        _ => panic!("input kind mismatch"),
    };
    let pos = tensor(model, "positional");
    let mut x: Mat = tokens.iter().enumerate().map(|(i, r)| r.iter().zip(&pos[i]).map(|(a, b)| a + b).collect()).collect();
    assert_eq!(x[0].len(), d);

    for i in 0..cfg.depth {
        let w = layer_weights(model, i);
        let s = spec.as_ref().map_or(0.1, |s| s.s);
        let ad = model.param(&format!("adapters.{i}.down.weight")).map(|_| adapter_weights(model, i, s));
        x = match model.param(&format!("prompts.{i}")) {
            Some(_) => prompted_layer(&x, &tensor(model, &format!("prompts.{i}")), &w, cfg.num_heads, ad.as_ref()),
            None => encoder_layer(&x, &w, cfg.num_heads, ad.as_ref()),
        };
    }
    let rep = match cfg.kind {
        BackboneKind::AstLike => x[0].clone(),
        BackboneKind::W2v2Like => {
            let n = x.len() as f64;
            let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
            let std: Vec<f64> =
                (0..d).map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n + 1e-5).sqrt()).collect();
            mean.into_iter().chain(std).collect()
        }
    };
    let logits = add_row(&matmul(&vec![rep.clone()], &tensor(model, "head.weight")), &row(model, "head.bias"));
    (rep, logits[0].clone())
}

pub fn random_input(model: &Model<f64>, frames: usize, seed: u64) -> ipet_core::backbone::Input<f64> {
    use ipet_core::backbone::{BackboneKind, Input};
    use ipet_core::numerics::{SeededRng, Tensor};
    let mut rng = SeededRng::new(seed, 99);
    let cfg = model.config();
    match cfg.kind {
        BackboneKind::AstLike => {
            let f = cfg.freq_bins.unwrap();
            Input::Spectrogram(Tensor::matrix(f, frames, (0..f * frames).map(|_| rng.normal()).collect()).unwrap())
        }
        BackboneKind::W2v2Like => Input::Waveform(Tensor::new(vec![frames], (0..frames).map(|_| rng.normal()).collect()).unwrap()),
    }
}

/// Overwrites every parameter of `group` with fresh uniform values.
pub fn randomize_group(model: &mut Model<f64>, group: &str, bound: f64, seed: u64) {
    use ipet_core::numerics::SeededRng;
    let mut rng = SeededRng::new(seed, 98);
    for p in model.params_mut().iter_mut().filter(|p| p.group == group) {
        for v in p.tensor.data_mut() {
            *v = rng.uniform(-bound, bound);
        }
    }
}
