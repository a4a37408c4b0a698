use std::sync::Arc;

use super::sparse::ContractionPattern;
use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Vec<f64>),
    Sum(Var),
    Reshape(Var),
    ConcatCols(Var, Var),
    Cos(Var),
    Sin(Var),
    Silu(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Contract {
        kernel: Var,
        input: Var,
        pattern: Arc<ContractionPattern>,
        batch: usize,
        c_in: usize,
        c_out: usize,
    },
    ChannelNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    ReduceGroups {
        input: Var,
        group: usize,
        mode: Reduce,
        argmax: Vec<usize>,
    },
    MeanSamples(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records forward operations; [`Tape::backward`] replays them in reverse.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// reverse topological order. A tape supports a single backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `c = a · b` for row-major `a: m×k`, `b: k×n`.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (cj, bj) in c_row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cj += aip * bj;
            }
        }
    }
    c
}

pub const NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let c = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], c)?, Op::MatMul(a, b), rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if ta.shape().len() != 2 || tr.shape() != [ta.shape()[1]] {
            return Err(shape_err("add_row", ta.shape(), tr.shape()));
        }
        let n = ta.shape()[1];
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            for (x, r) in chunk.iter_mut().zip(tr.data()) {
                *x += r;
            }
        }
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(t, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x * c).collect(),
        )
        .expect("same length");
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, c), rg)
    }

    /// Multiplies row `i` of an `m×n` matrix by the constant `s[i]`.
    pub fn scale_rows(&mut self, a: Var, s: Vec<f64>) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || ta.shape()[0] != s.len() {
            return Err(shape_err("scale_rows", ta.shape(), &[s.len()]));
        }
        let n = ta.shape()[1];
        let mut data = ta.data().to_vec();
        for (chunk, si) in data.chunks_exact_mut(n).zip(&s) {
            chunk.iter_mut().for_each(|x| *x *= si);
        }
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::ScaleRows(a, s), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// `[a | b]` for `a: m×n1`, `b: m×n2`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[0] != tb.shape()[0] {
            return Err(shape_err("concat_cols", ta.shape(), tb.shape()));
        }
        let (m, n1, n2) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut data = Vec::with_capacity(m * (n1 + n2));
        for i in 0..m {
            data.extend_from_slice(&ta.data()[i * n1..(i + 1) * n1]);
            data.extend_from_slice(&tb.data()[i * n2..(i + 1) * n2]);
        }
        let t = Tensor::new(vec![m, n1 + n2], data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::ConcatCols(a, b), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| f(x)).collect(),
        )
        .expect("same length");
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    /// The pointwise nonlinearity used throughout: `x · sigmoid(x)`.
    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, silu, Op::Silu(a))
    }

    /// Mean cross-entropy of `logits: B×K` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.shape().len() != 2 || t.shape()[0] != labels.len() {
            return Err(shape_err(
                "softmax_cross_entropy",
                t.shape(),
                &[labels.len()],
            ));
        }
        let (b, k) = (t.shape()[0], t.shape()[1]);
        if labels.iter().any(|&l| l >= k) {
            return Err(invalid("label out of range"));
        }
        let mut probs = vec![0.0; b * k];
        let mut loss = 0.0;
        for i in 0..b {
            let z = &t.data()[i * k..(i + 1) * k];
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
            for j in 0..k {
                probs[i * k + j] = (z[j] - m).exp() / sum;
            }
            loss += m + sum.ln() - z[labels[i]];
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss / b as f64),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Sparse kernel contraction, see [`ContractionPattern`].
    /// `kernel: R × (c_out·c_in)`, `input: B × n_in × c_in` → `B × n_out × c_out`.
    pub fn contract(
        &mut self,
        kernel: Var,
        input: Var,
        pattern: Arc<ContractionPattern>,
    ) -> Result<Var> {
        let (tk, tx) = (self.value(kernel), self.value(input));
        if tx.shape().len() != 3 || tk.shape().len() != 2 {
            return Err(shape_err("contract", tk.shape(), tx.shape()));
        }
        let (batch, c_in) = (tx.shape()[0], tx.shape()[2]);
        if tx.shape()[1] != pattern.n_in()
            || tk.shape()[0] != pattern.n_rows()
            || tk.shape()[1] % c_in != 0
        {
            return Err(shape_err("contract", tk.shape(), tx.shape()));
        }
        let c_out = tk.shape()[1] / c_in;
        let out = pattern.forward(tk.data(), tx.data(), batch, c_in, c_out)?;
        let t = Tensor::new(vec![batch, pattern.n_out(), c_out], out)?;
        let rg = self.rg(kernel) || self.rg(input);
        Ok(self.push(
            t,
            Op::Contract {
                kernel,
                input,
                pattern,
                batch,
                c_in,
                c_out,
            },
            rg,
        ))
    }

    /// Per-signal, per-channel standardization over the sample axis of a
    /// `B × N × C` tensor.
    pub fn channel_norm(&mut self, input: Var) -> Result<Var> {
        let t = self.value(input);
        if t.shape().len() != 3 {
            return Err(shape_err("channel_norm", t.shape(), &[]));
        }
        let (b, n, c) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let x = t.data();
        let mut out = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; b * c];
        for bi in 0..b {
            for ci in 0..c {
                let idx = |s: usize| (bi * n + s) * c + ci;
                let mean = (0..n).map(|s| x[idx(s)]).sum::<f64>() / n as f64;
                let var = (0..n).map(|s| (x[idx(s)] - mean).powi(2)).sum::<f64>() / n as f64;
                let is = 1.0 / (var + NORM_EPS).sqrt();
                inv_std[bi * c + ci] = is;
                for s in 0..n {
                    out[idx(s)] = (x[idx(s)] - mean) * is;
                }
            }
        }
        let t = Tensor::new(vec![b, n, c], out)?;
        let rg = self.rg(input);
        Ok(self.push(t, Op::ChannelNorm { input, inv_std }, rg))
    }

    /// Reduces consecutive groups of `group` samples: `B × (P·group) × C` → `B × P × C`.
    pub fn reduce_groups(&mut self, input: Var, group: usize, mode: Reduce) -> Result<Var> {
        let t = self.value(input);
        if t.shape().len() != 3 || group == 0 || !t.shape()[1].is_multiple_of(group) {
            return Err(shape_err("reduce_groups", t.shape(), &[group]));
        }
        let (b, n, c) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let p = n / group;
        let x = t.data();
        let mut out = vec![0.0; b * p * c];
        let mut argmax = Vec::new();
        if mode == Reduce::Max {
            argmax = vec![0; b * p * c];
        }
        for bi in 0..b {
            for pi in 0..p {
                for ci in 0..c {
                    let at = |r: usize| x[((bi * n) + pi * group + r) * c + ci];
                    let o = (bi * p + pi) * c + ci;
                    match mode {
                        Reduce::Mean => out[o] = (0..group).map(at).sum::<f64>() / group as f64,
                        Reduce::Max => {
                            let (best, val) = (0..group).map(|r| (r, at(r))).fold(
                                (0, f64::NEG_INFINITY),
                                |acc, cur| if cur.1 > acc.1 { cur } else { acc },
                            );
                            out[o] = val;
                            argmax[o] = best;
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![b, p, c], out)?;
        let rg = self.rg(input);
        Ok(self.push(
            t,
            Op::ReduceGroups {
                input,
                group,
                mode,
                argmax,
            },
            rg,
        ))
    }

    /// Mean over the sample axis: `B × N × C` → `B × C`.
    pub fn mean_samples(&mut self, input: Var) -> Result<Var> {
        let t = self.value(input);
        if t.shape().len() != 3 {
            return Err(shape_err("mean_samples", t.shape(), &[]));
        }
        let (b, n, c) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let mut out = vec![0.0; b * c];
        for bi in 0..b {
            for s in 0..n {
                for ci in 0..c {
                    out[bi * c + ci] += t.data()[(bi * n + s) * c + ci];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        let t = Tensor::new(vec![b, c], out)?;
        let rg = self.rg(input);
        Ok(self.push(t, Op::MeanSamples(input), rg))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(invalid("backward needs a scalar loss"));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                if !node.requires_grad {
                    return None;
                }
                let g = g.unwrap_or_else(|| vec![0.0; node.value.len()]);
                Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                acc(*a, &|ga| {
                    for r in 0..m {
                        for p in 0..k {
                            let s: f64 = (0..n).map(|j| g[r * n + j] * tb.data()[p * n + j]).sum();
                            ga[r * k + p] += s;
                        }
                    }
                });
                acc(*b, &|gb| {
                    for r in 0..m {
                        for p in 0..k {
                            let a_rp = ta.data()[r * k + p];
                            if a_rp == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += a_rp * g[r * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &|gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::AddRow(a, row) => {
                acc(*a, &|ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let n = self.value(*row).len();
                acc(*row, &|gr| {
                    for chunk in g.chunks_exact(n) {
                        gr.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &|ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * tb[j];
                    }
                });
                acc(*b, &|gb| {
                    for j in 0..gb.len() {
                        gb[j] += g[j] * ta[j];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &|ga| {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)
            }),
            Op::ScaleRows(a, s) => {
                let n = self.value(*a).shape()[1];
                acc(*a, &|ga| {
                    for ((gr, gi), si) in ga.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(s) {
                        gr.iter_mut().zip(gi).for_each(|(x, y)| *x += si * y);
                    }
                });
            }
            Op::Sum(a) => acc(*a, &|ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Reshape(a) => acc(*a, &|ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y)),
            Op::ConcatCols(a, b) => {
                let (n1, n2) = (self.value(*a).shape()[1], self.value(*b).shape()[1]);
                let w = n1 + n2;
                acc(*a, &|ga| {
                    for (dst, src) in ga.chunks_exact_mut(n1).zip(g.chunks_exact(w)) {
                        dst.iter_mut().zip(&src[..n1]).for_each(|(x, y)| *x += y);
                    }
                });
                acc(*b, &|gb| {
                    for (dst, src) in gb.chunks_exact_mut(n2).zip(g.chunks_exact(w)) {
                        dst.iter_mut().zip(&src[n1..]).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Cos(a) => {
                let x = self.value(*a).data();
                acc(*a, &|ga| {
                    for j in 0..ga.len() {
                        ga[j] -= g[j] * x[j].sin();
                    }
                });
            }
            Op::Sin(a) => {
                let x = self.value(*a).data();
                acc(*a, &|ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * x[j].cos();
                    }
                });
            }
            Op::Silu(a) => {
                let x = self.value(*a).data();
                acc(*a, &|ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * silu_grad(x[j]);
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let b = labels.len();
                let k = probs.len() / b;
                acc(*logits, &|gl| {
                    for i in 0..b {
                        for j in 0..k {
                            let onehot = if labels[i] == j { 1.0 } else { 0.0 };
                            gl[i * k + j] += g[0] * (probs[i * k + j] - onehot) / b as f64;
                        }
                    }
                });
            }
            Op::Contract {
                kernel,
                input,
                pattern,
                batch,
                c_in,
                c_out,
            } => {
                let (tk, tx) = (self.value(*kernel).data(), self.value(*input).data());
                let mut gk = nodes[kernel.0].requires_grad.then(|| vec![0.0; tk.len()]);
                let mut gx = nodes[input.0].requires_grad.then(|| vec![0.0; tx.len()]);
                pattern.backward(
                    tk,
                    tx,
                    g,
                    *batch,
                    *c_in,
                    *c_out,
                    gk.as_deref_mut(),
                    gx.as_deref_mut(),
                )?;
                if let Some(gk) = gk {
                    acc(*kernel, &|dst| {
                        dst.iter_mut().zip(&gk).for_each(|(x, y)| *x += y)
                    });
                }
                if let Some(gx) = gx {
                    acc(*input, &|dst| {
                        dst.iter_mut().zip(&gx).for_each(|(x, y)| *x += y)
                    });
                }
            }
            Op::ChannelNorm { input, inv_std } => {
                let y = node.value.data();
                let s = node.value.shape();
                let (b, n, c) = (s[0], s[1], s[2]);
                acc(*input, &|gx| {
                    for bi in 0..b {
                        for ci in 0..c {
                            let idx = |k: usize| (bi * n + k) * c + ci;
                            let mg = (0..n).map(|k| g[idx(k)]).sum::<f64>() / n as f64;
                            let mgy = (0..n).map(|k| g[idx(k)] * y[idx(k)]).sum::<f64>() / n as f64;
                            let is = inv_std[bi * c + ci];
                            for k in 0..n {
                                gx[idx(k)] += is * (g[idx(k)] - mg - y[idx(k)] * mgy);
                            }
                        }
                    }
                });
            }
            Op::ReduceGroups {
                input,
                group,
                mode,
                argmax,
            } => {
                let s = self.value(*input).shape();
                let (b, n, c) = (s[0], s[1], s[2]);
                let p = n / group;
                acc(*input, &|gx| {
                    for bi in 0..b {
                        for pi in 0..p {
                            for ci in 0..c {
                                let o = (bi * p + pi) * c + ci;
                                let at = |r: usize| ((bi * n) + pi * group + r) * c + ci;
                                match mode {
                                    Reduce::Mean => {
                                        for r in 0..*group {
                                            gx[at(r)] += g[o] / *group as f64;
                                        }
                                    }
                                    Reduce::Max => gx[at(argmax[o])] += g[o],
                                }
                            }
                        }
                    }
                });
            }
            Op::MeanSamples(input) => {
                let s = self.value(*input).shape();
                let (b, n, c) = (s[0], s[1], s[2]);
                acc(*input, &|gx| {
                    for bi in 0..b {
                        for k in 0..n {
                            for ci in 0..c {
                                gx[(bi * n + k) * c + ci] += g[bi * c + ci] / n as f64;
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }
}
