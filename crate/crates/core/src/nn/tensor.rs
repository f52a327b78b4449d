//! Dense tensors and a recorded tape for reverse-mode gradients.
//!
//! Every operation on a [`Graph`] appends a node holding its value and the
//! operands needed to backpropagate. [`Graph::backward`] walks the tape in
//! reverse and returns a [`Gradients`] table indexed by [`Var`].
//!
//! Feature maps use (channel, height, width) order with row-major storage.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("{n} elements for shape {shape:?}"),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// One-dimensional tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Element of a (C, H, W) map.
    pub fn at3(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.shape[1] + h) * self.shape[2] + w]
    }

    fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(op, "(channel, height, width)", format!("{:?}", self.shape))),
        }
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Dense { x: Var, w: Var, b: Var },
    ConvH { x: Var, k: Var, b: Var },
    MaxPoolH { x: Var, argmax: Vec<usize> },
    AvgPoolH { x: Var, k: usize },
    UpsampleW { x: Var, factor: usize },
    Concat(Vec<Var>),
    SliceChannels { x: Var, start: usize },
    Reshape(Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Abs(Var),
    Ln(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A forward computation recorded for backpropagation. Confined to one thread.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub(crate) fn softplus_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf (parameter, input or constant).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?}", self.shape(a)),
                format!("{:?}", self.shape(b)),
            ));
        }
        Ok(())
    }

    /// Per-position channel projection (a 1x1 convolution): `w` is (out, in), `b` is (out).
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ci, h, wd) = self.value(x).dims3("dense")?;
        let co = match self.shape(w) {
            [o, i] if *i == ci => *o,
            s => return Err(Error::shape("dense", format!("weights (out, {ci})"), format!("{s:?}"))),
        };
        if self.shape(b) != [co] {
            return Err(Error::shape("dense", format!("bias [{co}]"), format!("{:?}", self.shape(b))));
        }
        let plane = h * wd;
        let xs = self.value(x).data();
        let ws = self.value(w).data();
        let bs = self.value(b).data();
        let mut out = vec![0.0; co * plane];
        for o in 0..co {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(bs[o]);
            for i in 0..ci {
                let wv = ws[o * ci + i];
                for (d, s) in dst.iter_mut().zip(&xs[i * plane..(i + 1) * plane]) {
                    *d += wv * s;
                }
            }
        }
        Ok(self.push(Tensor::new(vec![co, h, wd], out)?, Op::Dense { x, w, b }))
    }

    /// Convolution along the height axis only: kernel (out, in, K) with odd K,
    /// stride 1 and zero padding K/2, so height and width are preserved.
    pub fn conv_h(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (ci, h, wd) = self.value(x).dims3("conv_h")?;
        let (co, kk) = match self.shape(k) {
            [o, i, kk] if *i == ci && kk % 2 == 1 => (*o, *kk),
            s => {
                return Err(Error::shape(
                    "conv_h",
                    format!("kernel (out, {ci}, odd)"),
                    format!("{s:?}"),
                ))
            }
        };
        if self.shape(b) != [co] {
            return Err(Error::shape("conv_h", format!("bias [{co}]"), format!("{:?}", self.shape(b))));
        }
        let pad = kk / 2;
        let xs = self.value(x).data();
        let ks = self.value(k).data();
        let bs = self.value(b).data();
        let mut out = vec![0.0; co * h * wd];
        for o in 0..co {
            out[o * h * wd..(o + 1) * h * wd].fill(bs[o]);
            for i in 0..ci {
                for t in 0..kk {
                    let kv = ks[(o * ci + i) * kk + t];
                    for hy in 0..h {
                        let src = hy + t;
                        if src < pad || src - pad >= h {
                            continue;
                        }
                        let hs = src - pad;
                        let d0 = (o * h + hy) * wd;
                        let s0 = (i * h + hs) * wd;
                        for (d, s) in out[d0..d0 + wd].iter_mut().zip(&xs[s0..s0 + wd]) {
                            *d += kv * s;
                        }
                    }
                }
            }
        }
        Ok(self.push(Tensor::new(vec![co, h, wd], out)?, Op::ConvH { x, k, b }))
    }

    fn pool_dims(&self, op: &'static str, x: Var, k: usize) -> Result<(usize, usize, usize)> {
        let (c, h, w) = self.value(x).dims3(op)?;
        if k == 0 || h % k != 0 {
            return Err(Error::shape(op, format!("window dividing height {h}"), format!("k = {k}")));
        }
        Ok((c, h, w))
    }

    /// Non-overlapping max pooling along height with window `k`.
    pub fn maxpool_h(&mut self, x: Var, k: usize) -> Result<Var> {
        let (c, h, w) = self.pool_dims("maxpool_h", x, k)?;
        let ho = h / k;
        let xs = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; c * ho * w];
        let mut argmax = vec![0usize; c * ho * w];
        for ch in 0..c {
            for hy in 0..h {
                let oy = hy / k;
                for col in 0..w {
                    let src = (ch * h + hy) * w + col;
                    let dst = (ch * ho + oy) * w + col;
                    if xs[src] > out[dst] {
                        out[dst] = xs[src];
                        argmax[dst] = src;
                    }
                }
            }
        }
        Ok(self.push(Tensor::new(vec![c, ho, w], out)?, Op::MaxPoolH { x, argmax }))
    }

    /// Non-overlapping average pooling along height with window `k`.
    pub fn avgpool_h(&mut self, x: Var, k: usize) -> Result<Var> {
        let (c, h, w) = self.pool_dims("avgpool_h", x, k)?;
        let ho = h / k;
        let xs = self.value(x).data();
        let mut out = vec![0.0; c * ho * w];
        for ch in 0..c {
            for hy in 0..h {
                let oy = hy / k;
                for col in 0..w {
                    out[(ch * ho + oy) * w + col] += xs[(ch * h + hy) * w + col] / k as f64;
                }
            }
        }
        Ok(self.push(Tensor::new(vec![c, ho, w], out)?, Op::AvgPoolH { x, k }))
    }

    /// Nearest-neighbour upsampling along width by an integer factor.
    pub fn upsample_w(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3("upsample_w")?;
        if factor == 0 {
            return Err(Error::shape("upsample_w", "factor >= 1", "0"));
        }
        let xs = self.value(x).data();
        let wo = w * factor;
        let mut out = vec![0.0; c * h * wo];
        for row in 0..c * h {
            for col in 0..wo {
                out[row * wo + col] = xs[row * w + col / factor];
            }
        }
        Ok(self.push(Tensor::new(vec![c, h, wo], out)?, Op::UpsampleW { x, factor }))
    }

    /// Concatenation of (C_i, H, W) maps along the channel axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::shape("concat_channels", "at least one input", "none"))?;
        let (_, h, w) = self.value(*first).dims3("concat_channels")?;
        let mut channels = 0;
        let mut out = Vec::new();
        for &x in xs {
            let (c, hh, ww) = self.value(x).dims3("concat_channels")?;
            if (hh, ww) != (h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("(_, {h}, {w})"),
                    format!("{:?}", self.shape(x)),
                ));
            }
            channels += c;
            out.extend_from_slice(self.value(x).data());
        }
        Ok(self.push(Tensor::new(vec![channels, h, w], out)?, Op::Concat(xs.to_vec())))
    }

    /// Channels `start..start + len` of a (C, H, W) map.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3("slice_channels")?;
        if start + len > c || len == 0 {
            return Err(Error::shape(
                "slice_channels",
                format!("range inside {c} channels"),
                format!("{start}..{}", start + len),
            ));
        }
        let plane = h * w;
        let data = self.value(x).data()[start * plane..(start + len) * plane].to_vec();
        Ok(self.push(Tensor::new(vec![len, h, w], data)?, Op::SliceChannels { x, start }))
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let data = self.value(x).data().to_vec();
        let t = Tensor::new(shape.to_vec(), data)
            .map_err(|_| Error::shape("reshape", format!("{:?}", self.shape(x)), format!("{shape:?}")))?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let t = Tensor {
            shape: v.shape.clone(),
            data: v.data.iter().map(|&a| f(a)).collect(),
        };
        self.push(t, op)
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let t = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect(),
        };
        Ok(self.push(t, op))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |a| a.max(0.0), Op::Relu(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.map(x, softplus_scalar, Op::Softplus(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid_scalar, Op::Sigmoid(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, f64::abs, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |a| a * a, Op::Square(x))
    }

    /// Natural log; every element must be positive.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        if let Some(i) = self.value(x).data().iter().position(|&a| !(a > 0.0)) {
            return Err(Error::Domain(format!("ln of non-positive value at element {i}")));
        }
        Ok(self.map(x, f64::ln, Op::Ln(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::Domain("division by zero".into()));
        }
        self.zip("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |a| a + c, Op::AddScalar(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |a| a * c, Op::Scale(x, c))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::vector(vec![s]), Op::Sum(x))
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", "scalar loss", format!("{:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(gy) = grads[id].take() else { continue };
            self.propagate(id, &gy, &mut grads);
            grads[id] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let y = node.value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = self.nodes[v.0].value.len();
            let g = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(g);
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Input => {}
            Op::Dense { x, w, b } => {
                let (ci, h, wd) = (self.shape(*x)[0], self.shape(*x)[1], self.shape(*x)[2]);
                let co = self.shape(*w)[0];
                let plane = h * wd;
                let (xs, ws) = (val(*x), val(*w));
                acc(*x, &mut |g| {
                    for o in 0..co {
                        for i in 0..ci {
                            let wv = ws[o * ci + i];
                            for (d, s) in g[i * plane..(i + 1) * plane].iter_mut().zip(&gy[o * plane..(o + 1) * plane]) {
                                *d += wv * s;
                            }
                        }
                    }
                });
                acc(*w, &mut |g| {
                    for o in 0..co {
                        for i in 0..ci {
                            g[o * ci + i] += gy[o * plane..(o + 1) * plane]
                                .iter()
                                .zip(&xs[i * plane..(i + 1) * plane])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |g| {
                    for o in 0..co {
                        g[o] += gy[o * plane..(o + 1) * plane].iter().sum::<f64>();
                    }
                });
            }
            Op::ConvH { x, k, b } => {
                let (ci, h, wd) = (self.shape(*x)[0], self.shape(*x)[1], self.shape(*x)[2]);
                let (co, kk) = (self.shape(*k)[0], self.shape(*k)[2]);
                let pad = kk / 2;
                let (xs, ks) = (val(*x), val(*k));
                let taps = |f: &mut dyn FnMut(usize, usize, usize, usize, usize)| {
                    for o in 0..co {
                        for i in 0..ci {
                            for t in 0..kk {
                                for hy in 0..h {
                                    let src = hy + t;
                                    if src < pad || src - pad >= h {
                                        continue;
                                    }
                                    f(o, i, t, (o * h + hy) * wd, (i * h + src - pad) * wd);
                                }
                            }
                        }
                    }
                };
                acc(*x, &mut |g| {
                    taps(&mut |o, i, t, d0, s0| {
                        let kv = ks[(o * ci + i) * kk + t];
                        for (gx, gyv) in g[s0..s0 + wd].iter_mut().zip(&gy[d0..d0 + wd]) {
                            *gx += kv * gyv;
                        }
                    })
                });
                acc(*k, &mut |g| {
                    taps(&mut |o, i, t, d0, s0| {
                        g[(o * ci + i) * kk + t] += gy[d0..d0 + wd]
                            .iter()
                            .zip(&xs[s0..s0 + wd])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    })
                });
                acc(*b, &mut |g| {
                    for o in 0..co {
                        g[o] += gy[o * h * wd..(o + 1) * h * wd].iter().sum::<f64>();
                    }
                });
            }
            Op::MaxPoolH { x, argmax } => acc(*x, &mut |g| {
                for (dst, &src) in argmax.iter().enumerate() {
                    g[src] += gy[dst];
                }
            }),
            Op::AvgPoolH { x, k } => {
                let (c, h, w) = (self.shape(*x)[0], self.shape(*x)[1], self.shape(*x)[2]);
                let ho = h / k;
                acc(*x, &mut |g| {
                    for ch in 0..c {
                        for hy in 0..h {
                            for col in 0..w {
                                g[(ch * h + hy) * w + col] += gy[(ch * ho + hy / k) * w + col] / *k as f64;
                            }
                        }
                    }
                })
            }
            Op::UpsampleW { x, factor } => {
                let w = self.shape(*x)[2];
                let wo = w * factor;
                acc(*x, &mut |g| {
                    for (i, gv) in gy.iter().enumerate() {
                        let (row, col) = (i / wo, i % wo);
                        g[row * w + col / factor] += gv;
                    }
                })
            }
            Op::Concat(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.nodes[x.0].value.len();
                    acc(x, &mut |g| {
                        for (d, s) in g.iter_mut().zip(&gy[offset..offset + n]) {
                            *d += s;
                        }
                    });
                    offset += n;
                }
            }
            Op::SliceChannels { x, start } => {
                let plane = self.shape(*x)[1] * self.shape(*x)[2];
                let base = start * plane;
                acc(*x, &mut |g| {
                    for (d, s) in g[base..base + gy.len()].iter_mut().zip(gy) {
                        *d += s;
                    }
                })
            }
            Op::Reshape(x) => acc(*x, &mut |g| add_into(g, gy)),
            Op::Relu(x) => {
                let xs = val(*x);
                acc(*x, &mut |g| {
                    for ((d, s), a) in g.iter_mut().zip(gy).zip(xs) {
                        if *a > 0.0 {
                            *d += s;
                        }
                    }
                })
            }
            Op::Softplus(x) => {
                let xs = val(*x);
                acc(*x, &mut |g| {
                    for ((d, s), a) in g.iter_mut().zip(gy).zip(xs) {
                        *d += s * sigmoid_scalar(*a);
                    }
                })
            }
            Op::Sigmoid(x) => acc(*x, &mut |g| {
                for ((d, s), yv) in g.iter_mut().zip(gy).zip(y) {
                    *d += s * yv * (1.0 - yv);
                }
            }),
            Op::Abs(x) => {
                let xs = val(*x);
                acc(*x, &mut |g| {
                    for ((d, s), a) in g.iter_mut().zip(gy).zip(xs) {
                        *d += s * if *a > 0.0 {
                            1.0
                        } else if *a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                })
            }
            Op::Ln(x) => {
                let xs = val(*x);
                acc(*x, &mut |g| {
                    for ((d, s), a) in g.iter_mut().zip(gy).zip(xs) {
                        *d += s / a;
                    }
                })
            }
            Op::Square(x) => {
                let xs = val(*x);
                acc(*x, &mut |g| {
                    for ((d, s), a) in g.iter_mut().zip(gy).zip(xs) {
                        *d += 2.0 * a * s;
                    }
                })
            }
            Op::Add(a, b) => {
                acc(*a, &mut |g| add_into(g, gy));
                acc(*b, &mut |g| add_into(g, gy));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |g| add_into(g, gy));
                acc(*b, &mut |g| {
                    for (d, s) in g.iter_mut().zip(gy) {
                        *d -= s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |g| {
                    for ((d, s), o) in g.iter_mut().zip(gy).zip(bv) {
                        *d += s * o;
                    }
                });
                acc(*b, &mut |g| {
                    for ((d, s), o) in g.iter_mut().zip(gy).zip(av) {
                        *d += s * o;
                    }
                });
            }
            Op::Div(a, b) => {
                let bv = val(*b);
                acc(*a, &mut |g| {
                    for ((d, s), o) in g.iter_mut().zip(gy).zip(bv) {
                        *d += s / o;
                    }
                });
                acc(*b, &mut |g| {
                    for (((d, s), o), q) in g.iter_mut().zip(gy).zip(bv).zip(y) {
                        *d -= s * q / o;
                    }
                });
            }
            Op::AddScalar(x) => acc(*x, &mut |g| add_into(g, gy)),
            Op::Scale(x, c) => acc(*x, &mut |g| {
                for (d, s) in g.iter_mut().zip(gy) {
                    *d += c * s;
                }
            }),
            Op::Sum(x) => acc(*x, &mut |g| {
                for d in g.iter_mut() {
                    *d += gy[0];
                }
            }),
        }
    }
}

fn add_into(g: &mut [f64], gy: &[f64]) {
    for (d, s) in g.iter_mut().zip(gy) {
        *d += s;
    }
}

/// Gradients of a scalar loss with respect to every node that influenced it.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`; `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zero-filled when `v` does not influence the loss.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}
