//! Reverse-mode differentiation over an eagerly evaluated tape.
//!
//! Every primitive computes its value immediately and appends one node to the
//! [`Tape`]. Because nodes are appended in execution order, walking the node
//! list backwards is a valid reverse topological order for the chain rule.

mod conv;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use conv::ConvGeom;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf { name: Option<String> },
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeom },
    Relu(Var),
    Sigmoid(Var),
    /// `argmax` holds, per channel, the flat spatial index that produced the max.
    GlobalPool { input: Var, mode: PoolMode, argmax: Vec<usize> },
    Binary { a: Var, b: Var, op: BinaryOp },
    Scale { x: Var, s: f32 },
    ScaleBy { x: Var, s: Var },
    ChannelScale { x: Var, w: Var },
    Concat(Vec<Var>),
    Select { x: Var, indices: Vec<usize> },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    /// Scalar function of one input whose gradient was computed during forward.
    Fused { x: Var, grad: Vec<f32> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records primitive applications in execution order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    shapes: Vec<Vec<usize>>,
    names: Vec<(String, Var)>,
}

impl Gradients {
    /// Gradient of `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }

    /// Gradients of all named leaves, keyed by name.
    pub fn named(&self) -> BTreeMap<String, Tensor> {
        self.names
            .iter()
            .map(|(n, v)| (n.clone(), self.get(*v)))
            .collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears all nodes so the tape can record a fresh forward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// An unnamed input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { name: None })
    }

    /// A named learnable parameter.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        self.push(value, Op::Leaf { name: Some(name.into()) })
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (in_ch, h, w) = self.value(input).dims3()?;
        let kshape = self.value(kernel).shape().to_vec();
        let [out_ch, k_in, kh, kw] = kshape[..] else {
            return Err(Error::shape(format!("kernel must be rank 4, got {kshape:?}")));
        };
        if k_in != in_ch {
            return Err(Error::shape(format!(
                "kernel expects {k_in} input channels, input has {in_ch}"
            )));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape(format!("kernel must be square and odd, got {kh}x{kw}")));
        }
        if self.value(bias).numel() != out_ch {
            return Err(Error::shape(format!(
                "bias has {} entries, kernel has {out_ch} outputs",
                self.value(bias).numel()
            )));
        }
        let geom = ConvGeom { in_ch, out_ch, k: kh, h, w };
        let out = conv::forward(
            geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(vec![out_ch, h, w], out)?;
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, geom }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            *v = v.max(0.0);
        }
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            *v = sigmoid(*v);
        }
        self.push(value, Op::Sigmoid(x))
    }

    /// Per-channel spatial max or mean of a `[C, H, W]` tensor, shaped `[C, 1, 1]`.
    pub fn global_pool(&mut self, x: Var, mode: PoolMode) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let plane = h * w;
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(c);
        let mut argmax = Vec::new();
        for ch in 0..c {
            let p = &data[ch * plane..(ch + 1) * plane];
            match mode {
                PoolMode::Max => {
                    // strict `>` keeps the first occurrence in row-major order
                    let mut best = 0;
                    for (i, &v) in p.iter().enumerate() {
                        if v > p[best] {
                            best = i;
                        }
                    }
                    argmax.push(best);
                    out.push(p[best]);
                }
                PoolMode::Mean => {
                    let s: f64 = p.iter().map(|&v| v as f64).sum();
                    out.push((s / plane as f64) as f32);
                }
            }
        }
        let value = Tensor::new(vec![c, 1, 1], out)?;
        Ok(self.push(value, Op::GlobalPool { input: x, mode, argmax }))
    }

    pub fn elementwise(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(format!(
                "elementwise operands differ: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut value = va.clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data()) {
            match op {
                BinaryOp::Add => *x += y,
                BinaryOp::Mul => *x *= y,
            }
        }
        Ok(self.push(value, Op::Binary { a, b, op }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryOp::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryOp::Mul)
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            *v *= s;
        }
        self.push(value, Op::Scale { x, s })
    }

    /// Multiplies `x` by a learnable one-element tensor `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::shape(format!(
                "scale_by needs a scalar, got {:?}",
                self.value(s).shape()
            )));
        }
        let sv = self.value(s).data()[0];
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            *v *= sv;
        }
        Ok(self.push(value, Op::ScaleBy { x, s }))
    }

    /// Multiplies every pixel of channel `i` by `w[i]`.
    pub fn channel_scale(&mut self, x: Var, w: Var) -> Result<Var> {
        let (c, h, wd) = self.value(x).dims3()?;
        if self.value(w).shape() != [c] {
            return Err(Error::shape(format!(
                "channel weights {:?} do not match {c} channels",
                self.value(w).shape()
            )));
        }
        let plane = h * wd;
        let mut value = self.value(x).clone();
        let weights = self.value(w).data().to_vec();
        for (ch, p) in value.data_mut().chunks_mut(plane).enumerate() {
            for v in p {
                *v *= weights[ch];
            }
        }
        Ok(self.push(value, Op::ChannelScale { x, w }))
    }

    /// Stacks `[C_i, H, W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_channels needs at least one part"));
        };
        let (_, h, w) = self.value(*first).dims3()?;
        let mut total = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (c, ph, pw) = self.value(p).dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape(format!(
                    "concat spatial mismatch: {h}x{w} vs {ph}x{pw}"
                )));
            }
            total += c;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![total, h, w], data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    /// Output channel `j` is input channel `indices[j]`.
    pub fn select_channels(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if indices.is_empty() || indices.iter().any(|&i| i >= c) {
            return Err(Error::shape(format!(
                "channel indices {indices:?} out of range for {c} channels"
            )));
        }
        let plane = h * w;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(indices.len() * plane);
        for &i in indices {
            data.extend_from_slice(&src[i * plane..(i + 1) * plane]);
        }
        let value = Tensor::new(vec![indices.len(), h, w], data)?;
        Ok(self.push(value, Op::Select { x, indices: indices.to_vec() }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.push(Tensor::scalar(s as f32), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.push(Tensor::scalar((s / n) as f32), Op::Mean(x))
    }

    /// Records a scalar-valued function of `x` whose value and gradient the
    /// caller has already computed. Used for fused losses.
    pub fn fused_scalar(&mut self, x: Var, value: f32, grad: Vec<f32>) -> Result<Var> {
        if grad.len() != self.value(x).numel() {
            return Err(Error::shape(format!(
                "fused gradient has {} entries, input has {}",
                grad.len(),
                self.value(x).numel()
            )));
        }
        Ok(self.push(Tensor::scalar(value), Op::Fused { x, grad }))
    }

    /// Back-propagates from the scalar `loss`.
    ///
    /// The tape may only be differentiated once per recorded forward pass;
    /// call [`Tape::reset`] before recording the next one.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Contract(
                "backward already ran on this tape; record a new forward pass first".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let names = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, node)| match &node.op {
                Op::Leaf { name: Some(n) } => Some((n.clone(), Var(i))),
                _ => None,
            })
            .collect();
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes, names })
    }

    fn propagate(&self, id: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Conv2d { input, kernel, bias, geom } => {
                let x = self.value(*input).data();
                let k = self.value(*kernel).data();
                accumulate(grads, *input, conv::backward_input(*geom, g, k));
                accumulate(grads, *kernel, conv::backward_kernel(*geom, g, x));
                accumulate(grads, *bias, conv::backward_bias(*geom, g));
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let d = g
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::Sigmoid(x) => {
                let s = node.value.data();
                let d = g.iter().zip(s).map(|(&gi, &si)| gi * si * (1.0 - si)).collect();
                accumulate(grads, *x, d);
            }
            Op::GlobalPool { input, mode, argmax } => {
                let (c, h, w) = self.value(*input).dims3().expect("pool input");
                let plane = h * w;
                let mut d = vec![0.0f32; c * plane];
                for ch in 0..c {
                    match mode {
                        PoolMode::Max => d[ch * plane + argmax[ch]] = g[ch],
                        PoolMode::Mean => {
                            let share = g[ch] / plane as f32;
                            d[ch * plane..(ch + 1) * plane].fill(share);
                        }
                    }
                }
                accumulate(grads, *input, d);
            }
            Op::Binary { a, b, op } => match op {
                BinaryOp::Add => {
                    accumulate(grads, *a, g.to_vec());
                    accumulate(grads, *b, g.to_vec());
                }
                BinaryOp::Mul => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    accumulate(grads, *a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                    accumulate(grads, *b, g.iter().zip(va).map(|(x, y)| x * y).collect());
                }
            },
            Op::Scale { x, s } => accumulate(grads, *x, g.iter().map(|v| v * s).collect()),
            Op::ScaleBy { x, s } => {
                let sv = self.value(*s).data()[0];
                let xv = self.value(*x).data();
                let ds: f64 = g.iter().zip(xv).map(|(a, b)| (a * b) as f64).sum();
                accumulate(grads, *x, g.iter().map(|v| v * sv).collect());
                accumulate(grads, *s, vec![ds as f32]);
            }
            Op::ChannelScale { x, w } => {
                let (c, h, wd) = self.value(*x).dims3().expect("channel_scale input");
                let plane = h * wd;
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let mut dx = vec![0.0f32; c * plane];
                let mut dw = vec![0.0f32; c];
                for ch in 0..c {
                    let r = ch * plane..(ch + 1) * plane;
                    let mut acc = 0.0f64;
                    for ((d, &gi), &xi) in dx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xv[r]) {
                        *d = gi * wv[ch];
                        acc += (gi * xi) as f64;
                    }
                    dw[ch] = acc as f32;
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *w, dw);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    accumulate(grads, p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::Select { x, indices } => {
                let (c, h, w) = self.value(*x).dims3().expect("select input");
                let plane = h * w;
                let mut d = vec![0.0f32; c * plane];
                for (j, &i) in indices.iter().enumerate() {
                    for (a, b) in d[i * plane..(i + 1) * plane]
                        .iter_mut()
                        .zip(&g[j * plane..(j + 1) * plane])
                    {
                        *a += b;
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::Reshape(x) => accumulate(grads, *x, g.to_vec()),
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                accumulate(grads, *x, vec![g[0] / n as f32; n]);
            }
            Op::Fused { x, grad } => {
                accumulate(grads, *x, grad.iter().map(|v| v * g[0]).collect());
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f32>>], v: Var, d: Vec<f32>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&d) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

/// Logistic function, kept strictly inside (0, 1) in `f32`.
pub fn sigmoid(x: f32) -> f32 {
    const HI: f32 = 1.0 - f32::EPSILON / 2.0;
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f32::MIN_POSITIVE, HI)
}
