//! Reverse-mode differentiation over a linear tape.
//!
//! Every forward call appends a node holding its value. Nodes whose inputs
//! all skip gradients are stored as constants, so frozen sub-graphs cost no
//! backward work. `backward` walks the tape in exact reverse order.

use std::sync::atomic::{AtomicU64, Ordering};

use super::{Real, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const STDDEV_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx
    }
}

/// Primitive operations addressable through [`Tape::forward_op`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    ConcatRows,
    SliceRows { start: usize, len: usize },
    Relu,
    Gelu,
    SoftmaxRows,
    /// One input (plain normalization) or three (`x`, gamma, beta).
    LayerNorm,
    Scale(f64),
    MeanRows,
    StddevRows,
    Transpose,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::ConcatRows => "concat_rows",
            OpKind::SliceRows { .. } => "slice_rows",
            OpKind::Relu => "relu",
            OpKind::Gelu => "gelu",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Scale(_) => "scale",
            OpKind::MeanRows => "mean_rows",
            OpKind::StddevRows => "stddev_rows",
            OpKind::Transpose => "transpose",
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    ConcatRows(Vec<usize>),
    SliceRows { src: usize, start: usize },
    Relu(usize),
    Gelu(usize),
    SoftmaxRows(usize),
    LayerNorm { x: usize, gamma: Option<usize>, beta: Option<usize>, xhat: Vec<T>, inv_std: Vec<T> },
    Scale(usize, T),
    MeanRows(usize),
    StddevRows(usize),
    Transpose(usize),
    Gather { src: usize, index: Vec<Option<usize>> },
    ScatterAdd { base: usize, patch: usize, index: Vec<usize> },
    Sum(usize),
    CrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<T> },
    BceWithLogits { logits: usize, targets: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    rows: usize,
    cols: usize,
    op: Op<T>,
}

/// Records operations for one forward/backward pass.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(op: &'static str, shapes: Vec<(usize, usize)>) -> TensorError {
    TensorError::Dimension { op, shapes: shapes.into_iter().map(|(r, c)| vec![r, c]).collect() }
}

fn gelu<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
}

/// Plain row-major matrix product used by the forward and backward rules.
fn matmul_raw<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

fn transpose_raw<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, len: usize, f: impl FnOnce(&mut [T])) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    f(buf);
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(TensorError::Tape("variable does not belong to this tape".into()));
        }
        Ok(v.idx)
    }

    fn dims(&self, idx: usize) -> (usize, usize) {
        (self.nodes[idx].rows, self.nodes[idx].cols)
    }

    fn needs(&self, idx: usize) -> bool {
        self.nodes[idx].value.requires_grad()
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<T>, requires_grad: bool, op: Op<T>) -> Var {
        let value = Tensor::matrix(rows, cols, data).expect("op produced consistent shape").with_grad(requires_grad);
        let op = if requires_grad || matches!(op, Op::Leaf) { op } else { Op::Constant };
        self.nodes.push(Node { value, rows, cols, op });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    /// Registers an input tensor. Its `requires_grad` flag decides whether a
    /// gradient is produced for it.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let (rows, cols) = tensor.dims2();
        let rg = tensor.requires_grad();
        self.push(rows, cols, tensor.into_data(), rg, Op::Leaf)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var, TensorError> {
        let t = Tensor::matrix(rows, cols, data)?;
        Ok(self.leaf(t))
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>, TensorError> {
        let i = self.check(v)?;
        Ok(&self.nodes[i].value)
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[self.check(v).expect("var on tape")].value.data()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.dims(self.check(v).expect("var on tape"))
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.check(v).map(|i| self.needs(i)).unwrap_or(false)
    }

    /// Gradient of the last `backward` call with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        let i = self.check(v).ok()?;
        self.nodes[i].value.grad()
    }

    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, TensorError> {
        let arity = |n: usize| -> Result<(), TensorError> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(TensorError::Contract(format!("{} takes {n} input(s), got {}", kind.name(), inputs.len())))
            }
        };
        match kind {
            OpKind::MatMul => arity(2).and_then(|_| self.matmul(inputs[0], inputs[1])),
            OpKind::Add => arity(2).and_then(|_| self.add(inputs[0], inputs[1])),
            OpKind::ConcatRows => self.concat_rows(inputs),
            OpKind::SliceRows { start, len } => arity(1).and_then(|_| self.slice_rows(inputs[0], start, len)),
            OpKind::Relu => arity(1).and_then(|_| self.relu(inputs[0])),
            OpKind::Gelu => arity(1).and_then(|_| self.gelu(inputs[0])),
            OpKind::SoftmaxRows => arity(1).and_then(|_| self.softmax_rows(inputs[0])),
            OpKind::LayerNorm => match inputs {
                [x] => self.layer_norm(*x, None),
                [x, g, b] => self.layer_norm(*x, Some((*g, *b))),
                _ => Err(TensorError::Contract("layer_norm takes 1 or 3 inputs".into())),
            },
            OpKind::Scale(s) => arity(1).and_then(|_| self.scale(inputs[0], T::lit(s))),
            OpKind::MeanRows => arity(1).and_then(|_| self.mean_rows(inputs[0])),
            OpKind::StddevRows => arity(1).and_then(|_| self.stddev_rows(inputs[0])),
            OpKind::Transpose => arity(1).and_then(|_| self.transpose(inputs[0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let ((m, k), (k2, n)) = (self.dims(ia), self.dims(ib));
        if k != k2 {
            return Err(dim_err("matmul", vec![(m, k), (k2, n)]));
        }
        let out = matmul_raw(self.nodes[ia].value.data(), self.nodes[ib].value.data(), m, k, n);
        let rg = self.needs(ia) || self.needs(ib);
        Ok(self.push(m, n, out, rg, Op::MatMul(ia, ib)))
    }

    /// Elementwise sum; `b` may also be a single row broadcast over `a`'s rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let ((m, n), (mb, nb)) = (self.dims(ia), self.dims(ib));
        if n != nb || (mb != m && mb != 1) {
            return Err(dim_err("add", vec![(m, n), (mb, nb)]));
        }
        let (av, bv) = (self.nodes[ia].value.data(), self.nodes[ib].value.data());
        let out = if mb == m {
            av.iter().zip(bv).map(|(&x, &y)| x + y).collect()
        } else {
            av.chunks(n).flat_map(|row| row.iter().zip(bv).map(|(&x, &y)| x + y)).collect()
        };
        let rg = self.needs(ia) || self.needs(ib);
        Ok(self.push(m, n, out, rg, Op::Add(ia, ib)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Contract("concat_rows needs at least one input".into()));
        }
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>, _>>()?;
        let cols = self.dims(idx[0]).1;
        if idx.iter().any(|&i| self.dims(i).1 != cols) {
            return Err(dim_err("concat_rows", idx.iter().map(|&i| self.dims(i)).collect()));
        }
        let rows = idx.iter().map(|&i| self.dims(i).0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &i in &idx {
            out.extend_from_slice(self.nodes[i].value.data());
        }
        let rg = idx.iter().any(|&i| self.needs(i));
        Ok(self.push(rows, cols, out, rg, Op::ConcatRows(idx)))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let (m, n) = self.dims(ix);
        if len == 0 || start + len > m {
            return Err(TensorError::Dimension {
                op: "slice_rows",
                shapes: vec![vec![m, n], vec![start, start + len]],
            });
        }
        let out = self.nodes[ix].value.data()[start * n..(start + len) * n].to_vec();
        let rg = self.needs(ix);
        Ok(self.push(len, n, out, rg, Op::SliceRows { src: ix, start }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: impl FnOnce(usize) -> Op<T>) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let (m, n) = self.dims(ix);
        let out = self.nodes[ix].value.data().iter().map(|&v| f(v)).collect();
        let rg = self.needs(ix);
        Ok(self.push(m, n, out, rg, op(ix)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, gelu, Op::Gelu)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var, TensorError> {
        self.unary(x, |v| v * s, |i| Op::Scale(i, s))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let (m, n) = self.dims(ix);
        let mut out = self.nodes[ix].value.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let rg = self.needs(ix);
        Ok(self.push(m, n, out, rg, Op::SoftmaxRows(ix)))
    }

    /// Row-wise normalization to zero mean and unit variance, with an optional
    /// affine `(gamma, beta)` pair of 1 × n rows.
    pub fn layer_norm(&mut self, x: Var, affine: Option<(Var, Var)>) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let (m, n) = self.dims(ix);
        let affine = match affine {
            Some((g, b)) => {
                let (ig, ib) = (self.check(g)?, self.check(b)?);
                if self.dims(ig) != (1, n) || self.dims(ib) != (1, n) {
                    return Err(dim_err("layer_norm", vec![(m, n), self.dims(ig), self.dims(ib)]));
                }
                Some((ig, ib))
            }
            None => None,
        };
        let eps = T::lit(LAYER_NORM_EPS);
        let nf = T::from_usize(n).unwrap();
        let xs = self.nodes[ix].value.data();
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        for row in xs.chunks(n) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|&v| (v - mean) * is));
        }
        let out = match affine {
            Some((ig, ib)) => {
                let (g, b) = (self.nodes[ig].value.data(), self.nodes[ib].value.data());
                xhat.chunks(n).flat_map(|row| row.iter().enumerate().map(|(j, &v)| v * g[j] + b[j])).collect()
            }
            None => xhat.clone(),
        };
        let rg = self.needs(ix) || affine.is_some_and(|(g, b)| self.needs(g) || self.needs(b));
        let op = Op::LayerNorm { x: ix, gamma: affine.map(|a| a.0), beta: affine.map(|a| a.1), xhat, inv_std };
        Ok(self.push(m, n, out, rg, op))
    }

    /// Column means over rows: m × n → 1 × n.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let (m, n) = self.dims(ix);
        let mf = T::from_usize(m).unwrap();
        let mut out = vec![T::zero(); n];
        for row in self.nodes[ix].value.data().chunks(n) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        out.iter_mut().for_each(|o| *o = *o / mf);
        let rg = self.needs(ix);
        Ok(self.push(1, n, out, rg, Op::MeanRows(ix)))
    }

    /// Column population standard deviation, `sqrt(var + eps)`: m × n → 1 × n.
    pub fn stddev_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let (m, n) = self.dims(ix);
        let mf = T::from_usize(m).unwrap();
        let xs = self.nodes[ix].value.data();
        let mut mean = vec![T::zero(); n];
        for row in xs.chunks(n) {
            for (o, &v) in mean.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        mean.iter_mut().for_each(|o| *o = *o / mf);
        let mut var = vec![T::zero(); n];
        for row in xs.chunks(n) {
            for j in 0..n {
                let d = row[j] - mean[j];
                var[j] = var[j] + d * d;
            }
        }
        let eps = T::lit(STDDEV_EPS);
        let out = var.into_iter().map(|v| (v / mf + eps).sqrt()).collect();
        let rg = self.needs(ix);
        Ok(self.push(1, n, out, rg, Op::StddevRows(ix)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let (m, n) = self.dims(ix);
        let out = transpose_raw(self.nodes[ix].value.data(), m, n);
        let rg = self.needs(ix);
        Ok(self.push(n, m, out, rg, Op::Transpose(ix)))
    }

    /// Builds a `rows × cols` tensor whose entry `i` is `src[index[i]]`, or zero
    /// where the index is `None`.
    pub fn gather(&mut self, src: Var, index: Vec<Option<usize>>, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let is = self.check(src)?;
        let len = self.nodes[is].value.numel();
        if index.len() != rows * cols || index.iter().flatten().any(|&j| j >= len) {
            return Err(dim_err("gather", vec![self.dims(is), (rows, cols)]));
        }
        let data = self.nodes[is].value.data();
        let out = index.iter().map(|j| j.map_or(T::zero(), |j| data[j])).collect();
        let rg = self.needs(is);
        Ok(self.push(rows, cols, out, rg, Op::Gather { src: is, index }))
    }

    /// Copy of `base` with `patch[j]` added at flat position `index[j]`.
    /// Positions not listed keep their exact bit pattern.
    pub fn scatter_add(&mut self, base: Var, patch: Var, index: Vec<usize>) -> Result<Var, TensorError> {
        let (ib, ip) = (self.check(base)?, self.check(patch)?);
        let (m, n) = self.dims(ib);
        if index.len() != self.nodes[ip].value.numel() || index.iter().any(|&j| j >= m * n) {
            return Err(dim_err("scatter_add", vec![(m, n), self.dims(ip)]));
        }
        let mut out = self.nodes[ib].value.data().to_vec();
        for (&j, &p) in index.iter().zip(self.nodes[ip].value.data()) {
            out[j] = out[j] + p;
        }
        let rg = self.needs(ib) || self.needs(ip);
        Ok(self.push(m, n, out, rg, Op::ScatterAdd { base: ib, patch: ip, index }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let total = self.nodes[ix].value.data().iter().copied().sum();
        let rg = self.needs(ix);
        Ok(self.push(1, 1, vec![total], rg, Op::Sum(ix)))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let il = self.check(logits)?;
        let (b, c) = self.dims(il);
        if labels.len() != b {
            return Err(dim_err("cross_entropy", vec![(b, c), (labels.len(), 1)]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(TensorError::Label(format!("label {bad} outside [0, {c})")));
        }
        let mut probs = Vec::with_capacity(b * c);
        let mut total = T::zero();
        for (row, &y) in self.nodes[il].value.data().chunks(c).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            total = total + (lse - row[y]);
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let loss = total / T::from_usize(b).unwrap();
        let rg = self.needs(il);
        Ok(self.push(1, 1, vec![loss], rg, Op::CrossEntropy { logits: il, labels: labels.to_vec(), probs }))
    }

    /// Mean over all entries of sigmoid binary cross-entropy.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T]) -> Result<Var, TensorError> {
        let il = self.check(logits)?;
        let (b, c) = self.dims(il);
        if targets.len() != b * c {
            return Err(dim_err("bce_with_logits", vec![(b, c), (targets.len(), 1)]));
        }
        if targets.iter().any(|&t| t != T::zero() && t != T::one()) {
            return Err(TensorError::Label("binary targets must be 0 or 1".into()));
        }
        let total = self.nodes[il]
            .value
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| z.max(T::zero()) - z * t + (T::one() + (-z.abs()).exp()).ln())
            .sum::<T>();
        let loss = total / T::from_usize(b * c).unwrap();
        let rg = self.needs(il);
        Ok(self.push(1, 1, vec![loss], rg, Op::BceWithLogits { logits: il, targets: targets.to_vec() }))
    }

    /// Back-propagates from a scalar `loss`, leaving gradients on every node
    /// that requires one. Earlier gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let il = self.check(loss)?;
        if self.nodes[il].value.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "loss must be scalar, got {:?}",
                self.nodes[il].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.needs(il) {
            return Ok(());
        }
        self.grads[il] = Some(vec![T::one()]);
        for i in (0..=il).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if !self.needs(i) {
                continue;
            }
            self.backprop_node(i, &g);
            self.nodes[i].value.set_grad(g)?;
        }
        self.grads.clear();
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &[T]) {
        let (m, n) = self.dims(i);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let needs = |j: usize| nodes[j].value.requires_grad();
        match &nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let k = nodes[a].cols;
                if needs(a) {
                    let bt = transpose_raw(nodes[b].value.data(), k, n);
                    let ga = matmul_raw(g, &bt, m, n, k);
                    accumulate(&mut grads[a], m * k, |buf| buf.iter_mut().zip(ga).for_each(|(o, v)| *o = *o + v));
                }
                if needs(b) {
                    let at = transpose_raw(nodes[a].value.data(), m, k);
                    let gb = matmul_raw(&at, g, k, m, n);
                    accumulate(&mut grads[b], k * n, |buf| buf.iter_mut().zip(gb).for_each(|(o, v)| *o = *o + v));
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                if needs(a) {
                    accumulate(&mut grads[a], m * n, |buf| buf.iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v));
                }
                if needs(b) {
                    let broadcast = nodes[b].rows != m;
                    let len = nodes[b].value.numel();
                    accumulate(&mut grads[b], len, |buf| {
                        if broadcast {
                            for row in g.chunks(n) {
                                buf.iter_mut().zip(row).for_each(|(o, &v)| *o = *o + v);
                            }
                        } else {
                            buf.iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v);
                        }
                    });
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p].value.numel();
                    if needs(p) {
                        let seg = &g[offset..offset + len];
                        accumulate(&mut grads[p], len, |buf| buf.iter_mut().zip(seg).for_each(|(o, &v)| *o = *o + v));
                    }
                    offset += len;
                }
            }
            Op::SliceRows { src, start } => {
                let (src, start) = (*src, *start);
                let len = nodes[src].value.numel();
                accumulate(&mut grads[src], len, |buf| {
                    buf[start * n..(start + m) * n].iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v)
                });
            }
            Op::Relu(x) => {
                let x = *x;
                let xs = nodes[x].value.data();
                accumulate(&mut grads[x], m * n, |buf| {
                    for ((o, &v), &xv) in buf.iter_mut().zip(g).zip(xs) {
                        if xv > T::zero() {
                            *o = *o + v;
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let x = *x;
                let xs = nodes[x].value.data();
                accumulate(&mut grads[x], m * n, |buf| {
                    for ((o, &v), &xv) in buf.iter_mut().zip(g).zip(xs) {
                        *o = *o + v * gelu_grad(xv);
                    }
                });
            }
            Op::Scale(x, s) => {
                let (x, s) = (*x, *s);
                accumulate(&mut grads[x], m * n, |buf| buf.iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v * s));
            }
            Op::SoftmaxRows(x) => {
                let x = *x;
                let ys = nodes[i].value.data();
                accumulate(&mut grads[x], m * n, |buf| {
                    for ((brow, grow), yrow) in buf.chunks_mut(n).zip(g.chunks(n)).zip(ys.chunks(n)) {
                        let dot = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum::<T>();
                        for ((o, &gv), &yv) in brow.iter_mut().zip(grow).zip(yrow) {
                            *o = *o + yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let x = *x;
                let nf = T::from_usize(n).unwrap();
                let gamma_v = gamma.map(|gi| nodes[gi].value.data());
                if let (Some(gi), Some(bi)) = (gamma, beta) {
                    let (gi, bi) = (*gi, *bi);
                    if needs(gi) {
                        accumulate(&mut grads[gi], n, |buf| {
                            for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                                for j in 0..n {
                                    buf[j] = buf[j] + grow[j] * hrow[j];
                                }
                            }
                        });
                    }
                    if needs(bi) {
                        accumulate(&mut grads[bi], n, |buf| {
                            for grow in g.chunks(n) {
                                buf.iter_mut().zip(grow).for_each(|(o, &v)| *o = *o + v);
                            }
                        });
                    }
                }
                if needs(x) {
                    accumulate(&mut grads[x], m * n, |buf| {
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            let hrow = &xhat[r * n..(r + 1) * n];
                            let dh: Vec<T> = match gamma_v {
                                Some(gv) => grow.iter().zip(gv).map(|(&a, &b)| a * b).collect(),
                                None => grow.to_vec(),
                            };
                            let sum_dh = dh.iter().copied().sum::<T>();
                            let sum_dh_h = dh.iter().zip(hrow).map(|(&a, &b)| a * b).sum::<T>();
                            let scale = inv_std[r] / nf;
                            for j in 0..n {
                                let v = scale * (nf * dh[j] - sum_dh - hrow[j] * sum_dh_h);
                                buf[r * n + j] = buf[r * n + j] + v;
                            }
                        }
                    });
                }
            }
            Op::MeanRows(x) => {
                let x = *x;
                let rows = nodes[x].rows;
                let rf = T::from_usize(rows).unwrap();
                accumulate(&mut grads[x], rows * n, |buf| {
                    for row in buf.chunks_mut(n) {
                        row.iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v / rf);
                    }
                });
            }
            Op::StddevRows(x) => {
                let x = *x;
                let rows = nodes[x].rows;
                let rf = T::from_usize(rows).unwrap();
                let xs = nodes[x].value.data();
                let std = nodes[i].value.data();
                let mut mean = vec![T::zero(); n];
                for row in xs.chunks(n) {
                    mean.iter_mut().zip(row).for_each(|(o, &v)| *o = *o + v);
                }
                mean.iter_mut().for_each(|o| *o = *o / rf);
                accumulate(&mut grads[x], rows * n, |buf| {
                    for (brow, xrow) in buf.chunks_mut(n).zip(xs.chunks(n)) {
                        for j in 0..n {
                            brow[j] = brow[j] + g[j] * (xrow[j] - mean[j]) / (rf * std[j]);
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let x = *x;
                let gt = transpose_raw(g, m, n);
                accumulate(&mut grads[x], m * n, |buf| buf.iter_mut().zip(gt).for_each(|(o, v)| *o = *o + v));
            }
            Op::Gather { src, index } => {
                let src = *src;
                let len = nodes[src].value.numel();
                accumulate(&mut grads[src], len, |buf| {
                    for (j, &v) in index.iter().zip(g) {
                        if let Some(j) = j {
                            buf[*j] = buf[*j] + v;
                        }
                    }
                });
            }
            Op::ScatterAdd { base, patch, index } => {
                let (base, patch) = (*base, *patch);
                if needs(base) {
                    accumulate(&mut grads[base], m * n, |buf| buf.iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v));
                }
                if needs(patch) {
                    accumulate(&mut grads[patch], index.len(), |buf| {
                        for (o, &j) in buf.iter_mut().zip(index) {
                            *o = *o + g[j];
                        }
                    });
                }
            }
            Op::Sum(x) => {
                let x = *x;
                let len = nodes[x].value.numel();
                accumulate(&mut grads[x], len, |buf| buf.iter_mut().for_each(|o| *o = *o + g[0]));
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let l = *logits;
                let (b, c) = (nodes[l].rows, nodes[l].cols);
                let scale = g[0] / T::from_usize(b).unwrap();
                accumulate(&mut grads[l], b * c, |buf| {
                    for (r, &y) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == y { T::one() } else { T::zero() };
                            buf[r * c + j] = buf[r * c + j] + (probs[r * c + j] - onehot) * scale;
                        }
                    }
                });
            }
            Op::BceWithLogits { logits, targets } => {
                let l = *logits;
                let zs = nodes[l].value.data();
                let scale = g[0] / T::from_usize(zs.len()).unwrap();
                accumulate(&mut grads[l], zs.len(), |buf| {
                    for ((o, &z), &t) in buf.iter_mut().zip(zs).zip(targets) {
                        let sig = T::one() / (T::one() + (-z).exp());
                        *o = *o + (sig - t) * scale;
                    }
                });
            }
        }
    }
}
