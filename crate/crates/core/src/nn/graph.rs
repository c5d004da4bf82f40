//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes together
//! with the forward value. [`Graph::backward`] walks the record in
//! reverse creation order, which is a valid topological order because
//! nodes can only refer to earlier nodes.
//!
//! Shape errors inside graph ops are programming errors and panic;
//! public entry points validate user-facing shapes before building.

use std::collections::BTreeMap;

use super::kernels::{col2im_1d, col2im_2d, gemm, im2col_1d, im2col_2d, Geom1d, Geom2d};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Abs(Var),
    Square(Var),
    Sin(Var),
    Cos(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    ChannelBias(Var, Var),
    RowBias(Var, Var),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Broadcast(Var),
    Slice { x: Var, axis: usize, start: usize },
    Pad { x: Var, axis: usize, before: usize },
    Conv1d { x: Var, w: Var, geom: Geom1d },
    ConvT1d { x: Var, w: Var, geom: Geom1d },
    Conv2d { x: Var, w: Var, geom: Geom2d },
    AvgPool2(Var),
    Upsample2(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Relu(..) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Abs(..) => "abs",
            Op::Square(..) => "square",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MeanRows(..) => "mean_rows",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::ChannelBias(..) => "channel_bias",
            Op::RowBias(..) => "row_bias",
            Op::Gather(..) => "gather",
            Op::Concat(..) => "concat",
            Op::Broadcast(..) => "broadcast",
            Op::Slice { .. } => "slice",
            Op::Pad { .. } => "pad",
            Op::Conv1d { .. } => "conv1d",
            Op::ConvT1d { .. } => "conv_transpose1d",
            Op::Conv2d { .. } => "conv2d",
            Op::AvgPool2(..) => "avg_pool2",
            Op::Upsample2(..) => "upsample2",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Cheap to create; one per forward pass.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    non_finite: Option<&'static str>,
}

/// Gradients from one backward pass, indexed by node.
#[derive(Clone, Debug)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
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
        if self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some(op.name());
        }
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Fails if any recorded value was non-finite, naming the first op.
    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(op) => Err(Error::NonFinite(format!("forward pass ({op})"))),
            None => Ok(()),
        }
    }

    /// Differentiable leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Named trainable leaf. Registering the same name twice returns the
    /// first node, so shared weights accumulate a single gradient.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(t.clone(), Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn params(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "{} operand shapes", op.name());
        let value = self.value(a).zip_map(self.value(b), f);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    /// `x + c` element-wise.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Offset(x), |v| v + c)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sin(x), f64::sin)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, Op::Cos(x), f64::cos)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let s = self.value(x).mean();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Column means of a `[rows, cols]` matrix, giving `[cols]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        assert_eq!(t.rank(), 2, "mean_rows needs a matrix");
        let (rows, cols) = (t.dim(0), t.dim(1));
        let mut out = vec![0.0; cols];
        for r in t.rows() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= rows as f64;
        }
        let rg = self.rg(x);
        self.push(Tensor::from_parts(vec![cols], out), Op::MeanRows(x), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(ta.rank() == 2 && tb.rank() == 2, "matmul needs matrices");
        let (m, k, n) = (ta.dim(0), ta.dim(1), tb.dim(1));
        assert_eq!(k, tb.dim(0), "matmul inner dimensions");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transposed();
        let rg = self.rg(x);
        self.push(value, Op::Transpose(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let value = self.value(x).clone().reshape(shape.to_vec()).expect("reshape size");
        let rg = self.rg(x);
        self.push(value, Op::Reshape(x), rg)
    }

    /// Adds `b[c]` to every element of channel `c` of `x: [C, ...]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Var {
        let (tx, tb) = (self.value(x), self.value(b));
        let c = tx.dim(0);
        assert_eq!(tb.shape(), [c], "channel bias shape");
        let inner = tx.len() / c.max(1);
        let mut out = tx.data().to_vec();
        for (ch, chunk) in out.chunks_mut(inner.max(1)).enumerate() {
            let bv = tb.data()[ch];
            for v in chunk {
                *v += bv;
            }
        }
        let shape = tx.shape().to_vec();
        let rg = self.rg(x) || self.rg(b);
        self.push(Tensor::from_parts(shape, out), Op::ChannelBias(x, b), rg)
    }

    /// Adds `b: [D]` to every row of `x: [N, D]`.
    pub fn row_bias(&mut self, x: Var, b: Var) -> Var {
        let (tx, tb) = (self.value(x), self.value(b));
        let d = tx.dim(1);
        assert_eq!(tb.shape(), [d], "row bias shape");
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(d) {
            for (v, bv) in row.iter_mut().zip(tb.data()) {
                *v += bv;
            }
        }
        let shape = tx.shape().to_vec();
        let rg = self.rg(x) || self.rg(b);
        self.push(Tensor::from_parts(shape, out), Op::RowBias(x, b), rg)
    }

    /// Rows of `table: [V, E]` picked by `idx`, giving `[idx.len(), E]`.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Var {
        let t = self.value(table);
        let (v, e) = (t.dim(0), t.dim(1));
        let mut out = Vec::with_capacity(idx.len() * e);
        for &i in idx {
            assert!(i < v, "gather index {i} >= {v}");
            out.extend_from_slice(t.row(i));
        }
        let rg = self.rg(table);
        self.push(
            Tensor::from_parts(vec![idx.len(), e], out),
            Op::Gather(table, idx.to_vec()),
            rg,
        )
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let first = self.shape(xs[0]).to_vec();
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            assert_eq!(s.len(), first.len(), "concat rank");
            for (d, (&a, &b)) in s.iter().zip(&first).enumerate() {
                assert!(d == axis || a == b, "concat shapes {s:?} vs {first:?}");
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &x in xs {
                let t = self.value(x);
                let n = t.dim(axis) * inner;
                out.extend_from_slice(&t.data()[o * n..(o + 1) * n]);
            }
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(Tensor::from_parts(shape, out), Op::Concat(xs.to_vec(), axis), rg)
    }

    /// Repeats `x: [C]` along a new trailing axis, giving `[C, len]`.
    pub fn broadcast_cols(&mut self, x: Var, len: usize) -> Var {
        let t = self.value(x);
        assert_eq!(t.rank(), 1, "broadcast_cols needs a vector");
        let mut out = Vec::with_capacity(t.len() * len);
        for &v in t.data() {
            out.extend(std::iter::repeat_n(v, len));
        }
        let c = t.len();
        let rg = self.rg(x);
        self.push(Tensor::from_parts(vec![c, len], out), Op::Broadcast(x), rg)
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let (outer, n, inner) = split_axis(t.shape(), axis);
        assert!(start + len <= n, "slice {start}+{len} beyond {n}");
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner;
            out.extend_from_slice(&t.data()[base + start * inner..base + (start + len) * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let rg = self.rg(x);
        self.push(Tensor::from_parts(shape, out), Op::Slice { x, axis, start }, rg)
    }

    /// Zero padding along one axis.
    pub fn pad(&mut self, x: Var, axis: usize, before: usize, after: usize) -> Var {
        let t = self.value(x);
        let (outer, n, inner) = split_axis(t.shape(), axis);
        let m = n + before + after;
        let mut out = vec![0.0; outer * m * inner];
        for o in 0..outer {
            let dst = o * m * inner + before * inner;
            out[dst..dst + n * inner].copy_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = m;
        let rg = self.rg(x);
        self.push(Tensor::from_parts(shape, out), Op::Pad { x, axis, before }, rg)
    }

    /// `x: [Cin, T]`, `w: [Cout, Cin, K]` → `[Cout, T']`, zero padded.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, pad: usize, dilation: usize) -> Var {
        let (tx, tw) = (self.value(x), self.value(w));
        let (cin, len) = (tx.dim(0), tx.dim(1));
        let (cout, wcin, k) = (tw.dim(0), tw.dim(1), tw.dim(2));
        assert_eq!(cin, wcin, "conv1d input channels");
        let len_out = Geom1d::conv_out_len(len, k, stride, pad, dilation).expect("conv1d input too short");
        let geom = Geom1d {
            channels: cin,
            len_in: len,
            kernel: k,
            stride,
            pad,
            dilation,
            len_out,
        };
        let cols = im2col_1d(tx.data(), &geom);
        let mut out = vec![0.0; cout * len_out];
        gemm(cout, geom.rows(), len_out, tw.data(), false, &cols, false, &mut out, 0.0);
        let rg = self.rg(x) || self.rg(w);
        self.push(Tensor::from_parts(vec![cout, len_out], out), Op::Conv1d { x, w, geom }, rg)
    }

    /// Transposed convolution, the adjoint of [`Graph::conv1d`] with the same
    /// stride, padding and dilation. `x: [Cin, T]`, `w: [Cin, Cout, K]`.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
        dilation: usize,
        output_pad: usize,
    ) -> Var {
        let (tx, tw) = (self.value(x), self.value(w));
        let (cin, len) = (tx.dim(0), tx.dim(1));
        let (wcin, cout, k) = (tw.dim(0), tw.dim(1), tw.dim(2));
        assert_eq!(cin, wcin, "conv_transpose1d input channels");
        assert!(output_pad < stride.max(1) || output_pad == 0, "output padding must be < stride");
        let full = (len - 1) * stride + dilation * (k - 1) + output_pad + 1;
        assert!(full > 2 * pad, "conv_transpose1d output would be empty");
        let len_out = full - 2 * pad;
        let geom = Geom1d {
            channels: cout,
            len_in: len_out,
            kernel: k,
            stride,
            pad,
            dilation,
            len_out: len,
        };
        let mut cols = vec![0.0; geom.rows() * len];
        gemm(geom.rows(), cin, len, tw.data(), true, tx.data(), false, &mut cols, 0.0);
        let mut out = vec![0.0; cout * len_out];
        col2im_1d(&cols, &geom, &mut out);
        let rg = self.rg(x) || self.rg(w);
        self.push(Tensor::from_parts(vec![cout, len_out], out), Op::ConvT1d { x, w, geom }, rg)
    }

    /// `x: [Cin, H, W]`, `w: [Cout, Cin, K, K]` → `[Cout, H', W']`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Var {
        let (tx, tw) = (self.value(x), self.value(w));
        let (cin, h, wd) = (tx.dim(0), tx.dim(1), tx.dim(2));
        let (cout, wcin, k) = (tw.dim(0), tw.dim(1), tw.dim(2));
        assert_eq!(cin, wcin, "conv2d input channels");
        let oh = Geom1d::conv_out_len(h, k, stride, pad, 1).expect("conv2d input too small");
        let ow = Geom1d::conv_out_len(wd, k, stride, pad, 1).expect("conv2d input too small");
        let geom = Geom2d {
            channels: cin,
            h,
            w: wd,
            kernel: k,
            stride,
            pad,
            oh,
            ow,
        };
        let cols = im2col_2d(tx.data(), &geom);
        let mut out = vec![0.0; cout * oh * ow];
        gemm(cout, geom.rows(), geom.out_len(), tw.data(), false, &cols, false, &mut out, 0.0);
        let rg = self.rg(x) || self.rg(w);
        self.push(Tensor::from_parts(vec![cout, oh, ow], out), Op::Conv2d { x, w, geom }, rg)
    }

    /// 2×2 average pooling of `[C, H, W]` with even `H`, `W`.
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (c, h, w) = (t.dim(0), t.dim(1), t.dim(2));
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even size");
        let (oh, ow) = (h / 2, w / 2);
        let d = t.data();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let base = ch * h * w + 2 * y * w + 2 * xx;
                    out[(ch * oh + y) * ow + xx] = 0.25 * (d[base] + d[base + 1] + d[base + w] + d[base + w + 1]);
                }
            }
        }
        let rg = self.rg(x);
        self.push(Tensor::from_parts(vec![c, oh, ow], out), Op::AvgPool2(x), rg)
    }

    /// Nearest-neighbour 2× upsampling of `[C, H, W]`.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (c, h, w) = (t.dim(0), t.dim(1), t.dim(2));
        let (oh, ow) = (2 * h, 2 * w);
        let d = t.data();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[(ch * oh + y) * ow + xx] = d[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        let rg = self.rg(x);
        self.push(Tensor::from_parts(vec![c, oh, ow], out), Op::Upsample2(x), rg)
    }

    /// Backward pass from a scalar node with unit seed.
    pub fn backward(&self, out: Var) -> Grads {
        let seed = Tensor::full(self.shape(out).to_vec(), 1.0);
        self.backward_with(out, seed)
    }

    /// Backward pass seeded with `seed` (same shape as `out`).
    pub fn backward_with(&self, out: Var, seed: Tensor) -> Grads {
        assert_eq!(seed.shape(), self.shape(out), "seed shape");
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    /// Gradient of every registered parameter; zeros where unreached.
    pub fn param_grads(&self, grads: &Grads) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, &v)| {
                let g = grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(self.shape(v).to_vec()));
                (name.clone(), g)
            })
            .collect()
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(vb, |x, y| x * y));
                acc(*b, g.zip_map(va, |x, y| x * y));
            }
            Op::Div(a, b) => {
                let vb = self.value(*b);
                acc(*a, g.zip_map(vb, |x, y| x / y));
                let gb = Tensor::from_parts(
                    out.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(out.data())
                        .zip(vb.data())
                        .map(|((gx, q), y)| -gx * q / y)
                        .collect(),
                );
                acc(*b, gb);
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| v * c)),
            Op::Offset(x) => acc(*x, g.clone()),
            Op::Relu(x) => {
                let vx = self.value(*x);
                acc(*x, g.zip_map(vx, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::LeakyRelu(x, slope) => {
                let vx = self.value(*x);
                acc(*x, g.zip_map(vx, |gv, xv| if xv > 0.0 { gv } else { slope * gv }));
            }
            Op::Tanh(x) => acc(*x, g.zip_map(out, |gv, y| gv * (1.0 - y * y))),
            Op::Sigmoid(x) => acc(*x, g.zip_map(out, |gv, y| gv * y * (1.0 - y))),
            Op::Abs(x) => {
                let vx = self.value(*x);
                acc(*x, g.zip_map(vx, |gv, xv| gv * sign(xv)));
            }
            Op::Square(x) => {
                let vx = self.value(*x);
                acc(*x, g.zip_map(vx, |gv, xv| 2.0 * gv * xv));
            }
            Op::Sin(x) => {
                let vx = self.value(*x);
                acc(*x, g.zip_map(vx, |gv, xv| gv * xv.cos()));
            }
            Op::Cos(x) => {
                let vx = self.value(*x);
                acc(*x, g.zip_map(vx, |gv, xv| -gv * xv.sin()));
            }
            Op::Sum(x) => acc(*x, Tensor::full(self.shape(*x).to_vec(), g.item())),
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                acc(*x, Tensor::full(self.shape(*x).to_vec(), g.item() / n));
            }
            Op::MeanRows(x) => {
                let shape = self.shape(*x).to_vec();
                let rows = shape[0];
                let mut d = Vec::with_capacity(rows * shape[1]);
                for _ in 0..rows {
                    d.extend(g.data().iter().map(|v| v / rows as f64));
                }
                acc(*x, Tensor::from_parts(shape, d));
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.dim(0), va.dim(1), vb.dim(1));
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, vb.data(), true, &mut ga, 0.0);
                    acc(*a, Tensor::from_parts(vec![m, k], ga));
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, va.data(), true, g.data(), false, &mut gb, 0.0);
                    acc(*b, Tensor::from_parts(vec![k, n], gb));
                }
            }
            Op::Transpose(x) => acc(*x, g.transposed()),
            Op::Reshape(x) => acc(
                *x,
                g.clone().reshape(self.shape(*x).to_vec()).expect("reshape grad"),
            ),
            Op::ChannelBias(x, b) => {
                acc(*x, g.clone());
                let c = self.shape(*b)[0];
                let inner = g.len() / c.max(1);
                let gb = g.data().chunks(inner.max(1)).map(|ch| ch.iter().sum()).collect();
                acc(*b, Tensor::from_parts(vec![c], gb));
            }
            Op::RowBias(x, b) => {
                acc(*x, g.clone());
                let d = self.shape(*b)[0];
                let mut gb = vec![0.0; d];
                for row in g.data().chunks(d) {
                    for (o, v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                acc(*b, Tensor::from_parts(vec![d], gb));
            }
            Op::Gather(table, idx) => {
                let shape = self.shape(*table).to_vec();
                let e = shape[1];
                let mut gt = vec![0.0; shape[0] * e];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..e {
                        gt[i * e + j] += g.data()[r * e + j];
                    }
                }
                acc(*table, Tensor::from_parts(shape, gt));
            }
            Op::Concat(xs, axis) => {
                let (outer, _, inner) = split_axis(out.shape(), *axis);
                let total = out.dim(*axis) * inner;
                let mut off = 0;
                for &x in xs {
                    let shape = self.shape(x).to_vec();
                    let n = shape[*axis] * inner;
                    if self.rg(x) {
                        let mut d = Vec::with_capacity(outer * n);
                        for o in 0..outer {
                            d.extend_from_slice(&g.data()[o * total + off..o * total + off + n]);
                        }
                        acc(x, Tensor::from_parts(shape, d));
                    }
                    off += n;
                }
            }
            Op::Broadcast(x) => {
                let c = self.shape(*x)[0];
                let len = out.dim(1);
                let d = g.data().chunks(len.max(1)).map(|r| r.iter().sum()).collect();
                acc(*x, Tensor::from_parts(vec![c], d));
            }
            Op::Slice { x, axis, start } => {
                let shape = self.shape(*x).to_vec();
                let (outer, n, inner) = split_axis(&shape, *axis);
                let len = out.dim(*axis);
                let mut d = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let dst = o * n * inner + start * inner;
                    d[dst..dst + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                acc(*x, Tensor::from_parts(shape, d));
            }
            Op::Pad { x, axis, before } => {
                let shape = self.shape(*x).to_vec();
                let (outer, n, inner) = split_axis(&shape, *axis);
                let m = out.dim(*axis);
                let mut d = Vec::with_capacity(outer * n * inner);
                for o in 0..outer {
                    let src = o * m * inner + before * inner;
                    d.extend_from_slice(&g.data()[src..src + n * inner]);
                }
                acc(*x, Tensor::from_parts(shape, d));
            }
            Op::Conv1d { x, w, geom } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let cout = vw.dim(0);
                if self.rg(*w) {
                    let cols = im2col_1d(vx.data(), geom);
                    let mut gw = vec![0.0; cout * geom.rows()];
                    gemm(cout, geom.len_out, geom.rows(), g.data(), false, &cols, true, &mut gw, 0.0);
                    acc(*w, Tensor::from_parts(vw.shape().to_vec(), gw));
                }
                if self.rg(*x) {
                    let mut gcols = vec![0.0; geom.rows() * geom.len_out];
                    gemm(geom.rows(), cout, geom.len_out, vw.data(), true, g.data(), false, &mut gcols, 0.0);
                    let mut gx = vec![0.0; vx.len()];
                    col2im_1d(&gcols, geom, &mut gx);
                    acc(*x, Tensor::from_parts(vx.shape().to_vec(), gx));
                }
            }
            Op::ConvT1d { x, w, geom } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let cin = vx.dim(0);
                let gcols = im2col_1d(g.data(), geom);
                if self.rg(*w) {
                    let mut gw = vec![0.0; cin * geom.rows()];
                    gemm(cin, geom.len_out, geom.rows(), vx.data(), false, &gcols, true, &mut gw, 0.0);
                    acc(*w, Tensor::from_parts(vw.shape().to_vec(), gw));
                }
                if self.rg(*x) {
                    let mut gx = vec![0.0; vx.len()];
                    gemm(cin, geom.rows(), geom.len_out, vw.data(), false, &gcols, false, &mut gx, 0.0);
                    acc(*x, Tensor::from_parts(vx.shape().to_vec(), gx));
                }
            }
            Op::Conv2d { x, w, geom } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let cout = vw.dim(0);
                if self.rg(*w) {
                    let cols = im2col_2d(vx.data(), geom);
                    let mut gw = vec![0.0; cout * geom.rows()];
                    gemm(cout, geom.out_len(), geom.rows(), g.data(), false, &cols, true, &mut gw, 0.0);
                    acc(*w, Tensor::from_parts(vw.shape().to_vec(), gw));
                }
                if self.rg(*x) {
                    let mut gcols = vec![0.0; geom.rows() * geom.out_len()];
                    gemm(geom.rows(), cout, geom.out_len(), vw.data(), true, g.data(), false, &mut gcols, 0.0);
                    let mut gx = vec![0.0; vx.len()];
                    col2im_2d(&gcols, geom, &mut gx);
                    acc(*x, Tensor::from_parts(vx.shape().to_vec(), gx));
                }
            }
            Op::AvgPool2(x) => {
                let shape = self.shape(*x).to_vec();
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (oh, ow) = (h / 2, w / 2);
                let mut d = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            d[(ch * h + y) * w + xx] = 0.25 * g.data()[(ch * oh + y / 2) * ow + xx / 2];
                        }
                    }
                }
                acc(*x, Tensor::from_parts(shape, d));
            }
            Op::Upsample2(x) => {
                let shape = self.shape(*x).to_vec();
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (oh, ow) = (2 * h, 2 * w);
                let mut d = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            d[(ch * h + y / 2) * w + xx / 2] += g.data()[(ch * oh + y) * ow + xx];
                        }
                    }
                }
                acc(*x, Tensor::from_parts(shape, d));
            }
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
