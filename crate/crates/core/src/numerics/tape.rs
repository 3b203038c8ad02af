//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation appends a node to a [`Tape`]; node indices are handed out
//! in creation order, so inputs always precede outputs and a single reverse
//! sweep visits each node once. Tapes are cheap and meant to be built per
//! sample and thrown away.

use std::sync::Arc;

use super::tensor::{matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse square mixing matrix applied independently to every frame.
#[derive(Debug, Clone)]
pub struct FrameMixer {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
}

impl FrameMixer {
    pub fn from_dense(matrix: &Tensor) -> Result<Self> {
        if matrix.rank() != 2 || matrix.rows() != matrix.cols() {
            return Err(Error::dim(format!(
                "mixing matrix must be square, got {:?}",
                matrix.shape()
            )));
        }
        let n = matrix.rows();
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                let v = matrix.data()[i * n + j];
                if v != 0.0 {
                    rows[i].push((j, v));
                    cols[j].push((i, v));
                }
            }
        }
        Ok(Self { n, rows, cols })
    }

    pub fn size(&self) -> usize {
        self.n
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    frames_in: usize,
    frames_out: usize,
    joints: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddBias(Var, Var),
    Relu(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Dot(Var, Var),
    L2Normalize(Var),
    LogSoftmax(Var),
    Select(Var, usize),
    Concat(Vec<Var>),
    Reshape(Var),
    MeanRows(Var),
    FrameMix(Var, Arc<FrameMixer>),
    TemporalConv(Var, Var, Var, ConvGeom),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations plus, after [`Tape::backward`], their gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

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

    /// Registers an input tensor. Only `requires_grad` inputs receive gradients.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad, "input")
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.input(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.input(value, true)
    }

    /// Copies the value of `v` into a new constant node (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("output of `{name}`")));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, a: Var, b: Var, name: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(format!("{name}: shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::dim(format!(
                "matmul: cannot multiply {:?} by {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg, "matmul")
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(value, op, rg, name)
    }

    fn map(&mut self, a: Var, op: Op, name: &str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        self.push(value, op, rg, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, Op::Scale(a, c), "scale", |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, Op::AddScalar(a), "add_scalar", |x| x + c)
    }

    /// `x[m, n] + b[n]`, broadcasting the bias over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let n = tb.numel();
        if tx.rank() != 2 || tx.shape()[1] != n {
            return Err(Error::dim(format!(
                "add_bias: bias of {n} does not fit {:?}",
                tx.shape()
            )));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(&[x, b]);
        self.push(value, Op::AddBias(x, b), rg, "add_bias")
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Relu(a), "relu", |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Exp(a), "exp", f64::exp)
    }

    /// Clamps to `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.map(a, Op::Clamp(a, lo, hi), "clamp", |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg, "mean")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.numel() != tb.numel() {
            return Err(Error::dim(format!(
                "dot: lengths {} and {} differ",
                ta.numel(),
                tb.numel()
            )));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let rg = self.rg(&[a, b]);
        self.push(Tensor::scalar(s), Op::Dot(a, b), rg, "dot")
    }

    /// `v / ‖v‖₂`.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let norm = t.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(
                "cannot normalize a zero vector".into(),
            ));
        }
        let data = t.data().iter().map(|x| x / norm).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        self.push(value, Op::L2Normalize(a), rg, "l2_normalize")
    }

    /// `vᵢ − logsumexp(v)` over all elements, max-shifted.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let lse = logsumexp(t.data());
        let data = t.data().iter().map(|x| x - lse).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        self.push(value, Op::LogSoftmax(a), rg, "log_softmax")
    }

    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        if index >= t.numel() {
            return Err(Error::dim(format!(
                "select: index {index} out of range for {} elements",
                t.numel()
            )));
        }
        let v = t.data()[index];
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(v), Op::Select(a, index), rg, "select")
    }

    /// Flattens and concatenates the inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat: no inputs"));
        }
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(self.value(*p).data());
        }
        let rg = self.rg(parts);
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg, "concat")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape.to_vec())?;
        let rg = self.rg(&[a]);
        self.push(value, Op::Reshape(a), rg, "reshape")
    }

    /// Column means of a `[m, n]` matrix, giving `[n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::dim(format!("mean_rows: expected matrix, got {:?}", t.shape())));
        }
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; n];
        for row in t.data().chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.rg(&[a]);
        self.push(Tensor::vector(out), Op::MeanRows(a), rg, "mean_rows")
    }

    /// Treats `h` as `[frames·joints, channels]` and applies `out_t = M · h_t`
    /// for every frame `t`.
    pub fn frame_mix(&mut self, h: Var, mixer: &Arc<FrameMixer>) -> Result<Var> {
        let t = self.value(h);
        let n = mixer.n;
        if t.rank() != 2 || t.rows() % n != 0 {
            return Err(Error::dim(format!(
                "frame_mix: {:?} is not a stack of {n}-joint frames",
                t.shape()
            )));
        }
        let c = t.shape()[1];
        let frames = t.rows() / n;
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for f in 0..frames {
            let base = f * n * c;
            for (i, row) in mixer.rows.iter().enumerate() {
                let dst = &mut out[base + i * c..base + (i + 1) * c];
                for &(j, w) in row {
                    let s = &src[base + j * c..base + (j + 1) * c];
                    for (o, x) in dst.iter_mut().zip(s) {
                        *o += w * x;
                    }
                }
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(&[h]);
        self.push(value, Op::FrameMix(h, Arc::clone(mixer)), rg, "frame_mix")
    }

    /// Convolution along time with "same" zero padding.
    ///
    /// `x` is `[frames·joints, c_in]`, `w` is `[kernel·c_in, c_out]` with row
    /// `k·c_in + ci`, `b` is `[c_out]`. Output has `(frames − 1)/stride + 1`
    /// frames.
    pub fn temporal_conv(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        joints: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if kernel % 2 == 0 || stride == 0 {
            return Err(Error::contract(format!(
                "temporal_conv: kernel {kernel} must be odd and stride {stride} positive"
            )));
        }
        if tx.rank() != 2 || joints == 0 || tx.rows() % joints != 0 {
            return Err(Error::dim(format!(
                "temporal_conv: input {:?} is not a stack of {joints}-joint frames",
                tx.shape()
            )));
        }
        let c_in = tx.shape()[1];
        if tw.rank() != 2 || tw.shape()[0] != kernel * c_in {
            return Err(Error::dim(format!(
                "temporal_conv: weight {:?} does not match kernel {kernel} × {c_in} channels",
                tw.shape()
            )));
        }
        let c_out = tw.shape()[1];
        if tb.numel() != c_out {
            return Err(Error::dim(format!(
                "temporal_conv: bias of {} for {c_out} channels",
                tb.numel()
            )));
        }
        let frames_in = tx.rows() / joints;
        let geom = ConvGeom {
            frames_in,
            frames_out: (frames_in - 1) / stride + 1,
            joints,
            c_in,
            c_out,
            kernel,
            stride,
        };
        let out = conv_forward(tx.data(), tw.data(), tb.data(), geom);
        let value = Tensor::new(vec![geom.frames_out * joints, c_out], out)?;
        let rg = self.rg(&[x, w, b]);
        self.push(value, Op::TemporalConv(x, w, b, geom), rg, "temporal_conv")
    }

    /// Propagates gradients of the scalar `loss` to every node it depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|d| Tensor::new(node.value.shape().to_vec(), d).expect("grad shape"))
            })
            .collect();
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| &nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if wants(*a) {
                    let acc = slot(grads, *a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &tb.data()[p * n..(p + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            acc[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if wants(*b) {
                    let acc = slot(grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, gv) in acc[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(*a) {
                    axpy(slot(grads, *a, g.len()), 1.0, g);
                }
                if wants(*b) {
                    axpy(slot(grads, *b, g.len()), sign, g);
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let other = val(*b).data();
                    for ((o, gv), y) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(other) {
                        *o += gv * y;
                    }
                }
                if wants(*b) {
                    let other = val(*a).data();
                    for ((o, gv), x) in slot(grads, *b, g.len()).iter_mut().zip(g).zip(other) {
                        *o += gv * x;
                    }
                }
            }
            Op::Scale(a, c) => axpy(slot(grads, *a, g.len()), *c, g),
            Op::AddScalar(a) | Op::Reshape(a) => axpy(slot(grads, *a, g.len()), 1.0, g),
            Op::AddBias(x, b) => {
                if wants(*x) {
                    axpy(slot(grads, *x, g.len()), 1.0, g);
                }
                if wants(*b) {
                    let n = val(*b).numel();
                    let acc = slot(grads, *b, n);
                    for row in g.chunks(n) {
                        axpy(acc, 1.0, row);
                    }
                }
            }
            Op::Relu(a) => {
                let x = val(*a).data();
                for ((o, gv), xv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(x) {
                    if *xv > 0.0 {
                        *o += gv;
                    }
                }
            }
            Op::Exp(a) => {
                let y = node.value.data();
                for ((o, gv), yv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(y) {
                    *o += gv * yv;
                }
            }
            Op::Clamp(a, lo, hi) => {
                let x = val(*a).data();
                for ((o, gv), xv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(x) {
                    if *xv >= *lo && *xv <= *hi {
                        *o += gv;
                    }
                }
            }
            Op::Sum(a) => {
                let n = val(*a).numel();
                slot(grads, *a, n).iter_mut().for_each(|o| *o += g[0]);
            }
            Op::Mean(a) => {
                let n = val(*a).numel();
                let s = g[0] / n as f64;
                slot(grads, *a, n).iter_mut().for_each(|o| *o += s);
            }
            Op::Dot(a, b) => {
                if wants(*a) {
                    let y = val(*b).data();
                    axpy(slot(grads, *a, y.len()), g[0], y);
                }
                if wants(*b) {
                    let x = val(*a).data();
                    axpy(slot(grads, *b, x.len()), g[0], x);
                }
            }
            Op::L2Normalize(a) => {
                let norm = val(*a).norm();
                let y = node.value.data();
                let yg: f64 = y.iter().zip(g).map(|(p, q)| p * q).sum();
                for ((o, gv), yv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(y) {
                    *o += (gv - yv * yg) / norm;
                }
            }
            Op::LogSoftmax(a) => {
                let y = node.value.data();
                let gs: f64 = g.iter().sum();
                for ((o, gv), yv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(y) {
                    *o += gv - yv.exp() * gs;
                }
            }
            Op::Select(a, i) => {
                let n = val(*a).numel();
                slot(grads, *a, n)[*i] += g[0];
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = val(*p).numel();
                    if wants(*p) {
                        axpy(slot(grads, *p, n), 1.0, &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::MeanRows(a) => {
                let t = val(*a);
                let m = t.shape()[0];
                let n = t.shape()[1];
                let acc = slot(grads, *a, m * n);
                let inv = 1.0 / m as f64;
                for row in acc.chunks_mut(n) {
                    for (o, gv) in row.iter_mut().zip(g) {
                        *o += gv * inv;
                    }
                }
            }
            Op::FrameMix(h, mixer) => {
                let n = mixer.n;
                let c = val(*h).shape()[1];
                let frames = g.len() / (n * c);
                let acc = slot(grads, *h, g.len());
                for f in 0..frames {
                    let base = f * n * c;
                    for (j, col) in mixer.cols.iter().enumerate() {
                        let dst = &mut acc[base + j * c..base + (j + 1) * c];
                        for &(i, w) in col {
                            let src = &g[base + i * c..base + (i + 1) * c];
                            for (o, gv) in dst.iter_mut().zip(src) {
                                *o += w * gv;
                            }
                        }
                    }
                }
            }
            Op::TemporalConv(x, w, b, geom) => {
                let (tx, tw) = (val(*x), val(*w));
                if wants(*b) {
                    let acc = slot(grads, *b, geom.c_out);
                    for row in g.chunks(geom.c_out) {
                        axpy(acc, 1.0, row);
                    }
                }
                if wants(*w) {
                    let acc = slot(grads, *w, tw.numel());
                    conv_backward_weight(tx.data(), g, acc, *geom);
                }
                if wants(*x) {
                    let acc = slot(grads, *x, tx.numel());
                    conv_backward_input(tw.data(), g, acc, *geom);
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn axpy(acc: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, v) in acc.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Max-shifted `log Σ exp(vᵢ)`.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// Source frame for output frame `to` and tap `k`, if inside the sequence.
#[inline]
fn tap(to: usize, k: usize, g: ConvGeom) -> Option<usize> {
    let pad = g.kernel / 2;
    let pos = (to * g.stride + k) as isize - pad as isize;
    (pos >= 0 && (pos as usize) < g.frames_in).then_some(pos as usize)
}

fn conv_forward(x: &[f64], w: &[f64], b: &[f64], g: ConvGeom) -> Vec<f64> {
    let mut out = vec![0.0; g.frames_out * g.joints * g.c_out];
    for to in 0..g.frames_out {
        for n in 0..g.joints {
            let o = &mut out[(to * g.joints + n) * g.c_out..(to * g.joints + n + 1) * g.c_out];
            o.copy_from_slice(b);
            for k in 0..g.kernel {
                let Some(ti) = tap(to, k, g) else { continue };
                let xrow = &x[(ti * g.joints + n) * g.c_in..(ti * g.joints + n + 1) * g.c_in];
                for (ci, xv) in xrow.iter().enumerate() {
                    if *xv == 0.0 {
                        continue;
                    }
                    let wrow = &w[(k * g.c_in + ci) * g.c_out..(k * g.c_in + ci + 1) * g.c_out];
                    for (ov, wv) in o.iter_mut().zip(wrow) {
                        *ov += xv * wv;
                    }
                }
            }
        }
    }
    out
}

fn conv_backward_weight(x: &[f64], gout: &[f64], acc: &mut [f64], g: ConvGeom) {
    for to in 0..g.frames_out {
        for n in 0..g.joints {
            let grow = &gout[(to * g.joints + n) * g.c_out..(to * g.joints + n + 1) * g.c_out];
            for k in 0..g.kernel {
                let Some(ti) = tap(to, k, g) else { continue };
                let xrow = &x[(ti * g.joints + n) * g.c_in..(ti * g.joints + n + 1) * g.c_in];
                for (ci, xv) in xrow.iter().enumerate() {
                    if *xv == 0.0 {
                        continue;
                    }
                    let arow = &mut acc[(k * g.c_in + ci) * g.c_out..(k * g.c_in + ci + 1) * g.c_out];
                    for (a, gv) in arow.iter_mut().zip(grow) {
                        *a += xv * gv;
                    }
                }
            }
        }
    }
}

fn conv_backward_input(w: &[f64], gout: &[f64], acc: &mut [f64], g: ConvGeom) {
    for to in 0..g.frames_out {
        for n in 0..g.joints {
            let grow = &gout[(to * g.joints + n) * g.c_out..(to * g.joints + n + 1) * g.c_out];
            for k in 0..g.kernel {
                let Some(ti) = tap(to, k, g) else { continue };
                let arow = &mut acc[(ti * g.joints + n) * g.c_in..(ti * g.joints + n + 1) * g.c_in];
                for (ci, a) in arow.iter_mut().enumerate() {
                    let wrow = &w[(k * g.c_in + ci) * g.c_out..(k * g.c_in + ci + 1) * g.c_out];
                    *a += wrow.iter().zip(grow).map(|(p, q)| p * q).sum::<f64>();
                }
            }
        }
    }
}
