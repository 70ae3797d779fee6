//! Linear record of executed ops with hand-written reverse-mode gradients.
//!
//! Ops are appended in execution order, so a reverse sweep over the record is
//! a valid topological order for backpropagation.

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::fft::{fft_in_place, padded_len};
use super::ops;
use super::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    },
    AvgPool {
        x: Var,
        window: usize,
        stride: usize,
    },
    Relu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale {
        x: Var,
        factor: f64,
    },
    Reshape(Var),
    LifCharge {
        v: Var,
        current: Var,
        tau: f64,
    },
    Spike {
        v: Var,
        threshold: f64,
        slope: f64,
    },
    Reset {
        v: Var,
        spike: Var,
        v_reset: f64,
    },
    Spectral {
        inputs: Vec<Var>,
        padded: usize,
    },
    MeanSqDiff(Var, Var),
    ExpScaled {
        x: Var,
        factor: f64,
    },
    StackLast(Vec<Var>),
    ScaleRows {
        x: Var,
        w: Var,
        col: usize,
    },
    MeanAxis0(Var),
    Loss {
        input: Var,
        grad: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Per-node gradient buffers produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` if no gradient flowed into it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, materializing zeros when nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Heaviside surrogate derivative `1 / (1 + α|x|)²`.
pub fn surrogate_derivative(x: f64, slope: f64) -> f64 {
    let d = 1.0 + slope * x.abs();
    1.0 / (d * d)
}

/// Discrete membrane update `v + (I - (v - v_rest)) / τ`.
pub fn lif_charge(v: f64, current: f64, tau: f64, v_rest: f64) -> f64 {
    v + (current - (v - v_rest)) / tau
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.0 >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward {
                node: var.0,
                recorded: self.nodes.len(),
            });
        }
        Ok(())
    }

    /// Records a value that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = ops::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let mut ins = vec![x, w];
        ins.extend(b);
        Ok(self.push(y, Op::Linear { x, w, b }, &ins))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let y = ops::conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        let mut ins = vec![x, w];
        ins.extend(b);
        Ok(self.push(
            y,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            },
            &ins,
        ))
    }

    pub fn avg_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let y = ops::avg_pool2d(self.value(x), window, stride)?;
        Ok(self.push(y, Op::AvgPool { x, window, stride }, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu(x), &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let y = ops::softmax(self.value(x), axis)?;
        Ok(self.push(y, Op::Softmax { x, axis }, &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        Ok(self.push(y, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        Ok(self.push(y, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let y = self.value(x).map(|v| v * factor);
        self.push(y, Op::Scale { x, factor }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        Ok(self.push(y, Op::Reshape(x), &[x]))
    }

    /// Leaky integration step of the membrane potential (pre-threshold).
    pub fn lif_charge(&mut self, v: Var, current: Var, tau: f64, v_rest: f64) -> Result<Var> {
        let y = self
            .value(v)
            .zip_map(self.value(current), |vv, i| lif_charge(vv, i, tau, v_rest))?;
        Ok(self.push(y, Op::LifCharge { v, current, tau }, &[v, current]))
    }

    /// Hard threshold forward, surrogate derivative backward.
    pub fn spike(&mut self, v: Var, threshold: f64, slope: f64) -> Var {
        let y = self
            .value(v)
            .map(|x| if x - threshold >= 0.0 { 1.0 } else { 0.0 });
        self.push(
            y,
            Op::Spike {
                v,
                threshold,
                slope,
            },
            &[v],
        )
    }

    /// Hard reset: `v (1 - s) + v_reset s`.
    pub fn reset(&mut self, v: Var, spike: Var, v_reset: f64) -> Result<Var> {
        let y = self
            .value(v)
            .zip_map(self.value(spike), |vv, s| vv * (1.0 - s) + v_reset * s)?;
        Ok(self.push(y, Op::Reset { v, spike, v_reset }, &[v, spike]))
    }

    /// FFT along the sequence of `inputs` (one tensor per time step, each
    /// with the batch on its leading axis).
    ///
    /// The output has shape `N × B × 2F`, where `N` is the zero-padded
    /// sequence length, `F` the per-sample feature count, and the trailing
    /// axis holds all real parts followed by all imaginary parts.
    pub fn spectral(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::shape("spectral transform needs at least one step"))?;
        let shape = self.value(first).shape().to_vec();
        for &v in inputs {
            if self.value(v).shape() != shape.as_slice() {
                return Err(Error::shape("spectral inputs must share one shape"));
            }
        }
        let batch = shape[0];
        let feats = self.value(first).len() / batch.max(1);
        let steps = inputs.len();
        let n = padded_len(steps);
        let mut out = vec![0.0; n * batch * 2 * feats];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..batch {
            for f in 0..feats {
                buf.fill(Complex64::new(0.0, 0.0));
                for (t, &v) in inputs.iter().enumerate() {
                    buf[t].re = self.value(v).data()[b * feats + f];
                }
                fft_in_place(&mut buf, false)?;
                for (k, c) in buf.iter().enumerate() {
                    let row = (k * batch + b) * 2 * feats;
                    out[row + f] = c.re;
                    out[row + feats + f] = c.im;
                }
            }
        }
        let y = Tensor::from_parts(vec![n, batch, 2 * feats], out);
        Ok(self.push(
            y,
            Op::Spectral {
                inputs: inputs.to_vec(),
                padded: n,
            },
            inputs,
        ))
    }

    /// Per-sample mean squared difference of two `N × B × D` tensors.
    pub fn mean_sq_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.expect_same_shape(tb)?;
        ta.expect_rank(3, "mean_sq_diff operand")?;
        let (n, batch, d) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
        let mut out = vec![0.0; batch];
        for k in 0..n {
            for (s, o) in out.iter_mut().enumerate() {
                let off = (k * batch + s) * d;
                *o += ta.data()[off..off + d]
                    .iter()
                    .zip(&tb.data()[off..off + d])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>();
            }
        }
        let denom = (n * d) as f64;
        out.iter_mut().for_each(|v| *v /= denom);
        Ok(self.push(Tensor::from_parts(vec![batch], out), Op::MeanSqDiff(a, b), &[a, b]))
    }

    pub fn exp_scaled(&mut self, x: Var, factor: f64) -> Var {
        let y = self.value(x).map(|v| (factor * v).exp());
        self.push(y, Op::ExpScaled { x, factor }, &[x])
    }

    /// Stacks equally shaped tensors along a new trailing axis.
    pub fn stack_last(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::shape("stack_last needs at least one input"))?;
        let shape = self.value(first).shape().to_vec();
        let k = inputs.len();
        let len = self.value(first).len();
        let mut out = vec![0.0; len * k];
        for (j, &v) in inputs.iter().enumerate() {
            let t = self.value(v);
            if t.shape() != shape.as_slice() {
                return Err(Error::shape("stack_last inputs must share one shape"));
            }
            for (i, &x) in t.data().iter().enumerate() {
                out[i * k + j] = x;
            }
        }
        let mut new_shape = shape;
        new_shape.push(k);
        Ok(self.push(
            Tensor::from_parts(new_shape, out),
            Op::StackLast(inputs.to_vec()),
            inputs,
        ))
    }

    /// `y[n, b, :] = x[n, b, :] * w[b, col]` for `x: N×B×D`, `w: B×K`.
    pub fn scale_rows(&mut self, x: Var, w: Var, col: usize) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        tx.expect_rank(3, "scale_rows input")?;
        tw.expect_rank(2, "scale_rows weights")?;
        let (n, batch, d) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let k = tw.shape()[1];
        if tw.shape()[0] != batch || col >= k {
            return Err(Error::shape(format!(
                "scale_rows: weights {:?} incompatible with input {:?} (col {col})",
                tw.shape(),
                tx.shape()
            )));
        }
        let mut out = tx.data().to_vec();
        for t in 0..n {
            for s in 0..batch {
                let scale = tw.data()[s * k + col];
                out[(t * batch + s) * d..][..d]
                    .iter_mut()
                    .for_each(|v| *v *= scale);
            }
        }
        Ok(self.push(
            Tensor::from_parts(tx.shape().to_vec(), out),
            Op::ScaleRows { x, w, col },
            &[x, w],
        ))
    }

    /// Mean over the leading axis.
    pub fn mean_axis0(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() < 2 {
            return Err(Error::shape("mean_axis0 needs rank >= 2"));
        }
        let n = tx.shape()[0];
        let inner = tx.len() / n;
        let mut out = vec![0.0; inner];
        for t in 0..n {
            for (o, v) in out.iter_mut().zip(&tx.data()[t * inner..(t + 1) * inner]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        let y = Tensor::from_parts(tx.shape()[1..].to_vec(), out);
        Ok(self.push(y, Op::MeanAxis0(x), &[x]))
    }

    /// Records a scalar loss whose gradient with respect to `input` was
    /// computed alongside its value.
    pub fn loss(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var> {
        self.value(input).expect_same_shape(&grad)?;
        Ok(self.push(Tensor::scalar(value), Op::Loss { input, grad }, &[input]))
    }

    /// Reverse sweep from `output`, seeded with `seed` (same shape as the output).
    pub fn backward(&self, output: Var, seed: &Tensor) -> Result<Gradients> {
        self.check(output)?;
        self.value(output).expect_same_shape(seed)?;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed.clone());

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let acc = |grads: &mut [Option<Tensor>], v: Var, t: Tensor| -> Result<()> {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => {
                    *slot = Some(t);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let need_x = self.wants(*x);
                let lg = ops::linear_backward(self.value(*x), self.value(*w), g, need_x)?;
                if need_x {
                    acc(grads, *x, lg.input)?;
                }
                if self.wants(*w) {
                    acc(grads, *w, lg.weight)?;
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        acc(grads, *b, lg.bias)?;
                    }
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let need_x = self.wants(*x);
                let cg = ops::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *stride,
                    *padding,
                    need_x,
                )?;
                if need_x {
                    acc(grads, *x, cg.input)?;
                }
                if self.wants(*w) {
                    acc(grads, *w, cg.kernels)?;
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        acc(grads, *b, cg.bias)?;
                    }
                }
            }
            Op::AvgPool { x, window, stride } => {
                let gx = ops::avg_pool2d_backward(self.value(*x).shape(), g, *window, *stride)?;
                acc(grads, *x, gx)?;
            }
            Op::Relu(x) => {
                acc(grads, *x, ops::relu_backward(self.value(*x), g)?)?;
            }
            Op::Softmax { x, axis } => {
                acc(grads, *x, ops::softmax_backward(&node.value, g, *axis)?)?;
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(grads, *a, g.clone())?;
                }
                if self.wants(*b) {
                    acc(grads, *b, g.clone())?;
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    acc(grads, *a, g.zip_map(self.value(*b), |gv, bv| gv * bv)?)?;
                }
                if self.wants(*b) {
                    acc(grads, *b, g.zip_map(self.value(*a), |gv, av| gv * av)?)?;
                }
            }
            Op::Scale { x, factor } => {
                acc(grads, *x, g.map(|v| v * factor))?;
            }
            Op::Reshape(x) => {
                acc(grads, *x, g.reshape(self.value(*x).shape())?)?;
            }
            Op::LifCharge { v, current, tau } => {
                if self.wants(*v) {
                    acc(grads, *v, g.map(|gv| gv * (1.0 - 1.0 / tau)))?;
                }
                if self.wants(*current) {
                    acc(grads, *current, g.map(|gv| gv / tau))?;
                }
            }
            Op::Spike {
                v,
                threshold,
                slope,
            } => {
                let gx = g.zip_map(self.value(*v), |gv, x| {
                    gv * surrogate_derivative(x - threshold, *slope)
                })?;
                acc(grads, *v, gx)?;
            }
            Op::Reset { v, spike, v_reset } => {
                let s = self.value(*spike);
                if self.wants(*v) {
                    acc(grads, *v, g.zip_map(s, |gv, sv| gv * (1.0 - sv))?)?;
                }
                if self.wants(*spike) {
                    let gs = g.zip_map(self.value(*v), |gv, vv| gv * (v_reset - vv))?;
                    acc(grads, *spike, gs)?;
                }
            }
            Op::Spectral { inputs, padded } => {
                let n = *padded;
                let (batch, two_f) = (g.shape()[1], g.shape()[2]);
                let feats = two_f / 2;
                let scale = n as f64;
                let mut per_step: Vec<Vec<f64>> = vec![vec![0.0; batch * feats]; inputs.len()];
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for b in 0..batch {
                    for f in 0..feats {
                        for (k, slot) in buf.iter_mut().enumerate() {
                            let row = (k * batch + b) * two_f;
                            *slot = Complex64::new(g.data()[row + f], g.data()[row + feats + f]);
                        }
                        // Re(Σ_k G_k e^{+iθ}) = N · Re(ifft(G))
                        fft_in_place(&mut buf, true)?;
                        for (t, dst) in per_step.iter_mut().enumerate() {
                            dst[b * feats + f] = buf[t].re * scale;
                        }
                    }
                }
                for (&v, data) in inputs.iter().zip(per_step) {
                    if self.wants(v) {
                        let shape = self.value(v).shape().to_vec();
                        acc(grads, v, Tensor::from_parts(shape, data))?;
                    }
                }
            }
            Op::MeanSqDiff(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, batch, d) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                let denom = (n * d) as f64;
                let mut ga = vec![0.0; ta.len()];
                for (i, out) in ga.iter_mut().enumerate() {
                    let s = (i / d) % batch;
                    *out = 2.0 * (ta.data()[i] - tb.data()[i]) / denom * g.data()[s];
                }
                let shape = ta.shape().to_vec();
                if self.wants(*b) {
                    let gb = ga.iter().map(|v| -v).collect();
                    acc(grads, *b, Tensor::from_parts(shape.clone(), gb))?;
                }
                if self.wants(*a) {
                    acc(grads, *a, Tensor::from_parts(shape, ga))?;
                }
            }
            Op::ExpScaled { x, factor } => {
                let gx = g.zip_map(&node.value, |gv, y| gv * y * factor)?;
                acc(grads, *x, gx)?;
            }
            Op::StackLast(inputs) => {
                let k = inputs.len();
                for (j, &v) in inputs.iter().enumerate() {
                    if self.wants(v) {
                        let data = (0..g.len() / k).map(|i| g.data()[i * k + j]).collect();
                        let shape = self.value(v).shape().to_vec();
                        acc(grads, v, Tensor::from_parts(shape, data))?;
                    }
                }
            }
            Op::ScaleRows { x, w, col } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (n, batch, d) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let k = tw.shape()[1];
                if self.wants(*x) {
                    let mut gx = g.data().to_vec();
                    for t in 0..n {
                        for s in 0..batch {
                            let scale = tw.data()[s * k + col];
                            gx[(t * batch + s) * d..][..d]
                                .iter_mut()
                                .for_each(|v| *v *= scale);
                        }
                    }
                    acc(grads, *x, Tensor::from_parts(tx.shape().to_vec(), gx))?;
                }
                if self.wants(*w) {
                    let mut gw = vec![0.0; tw.len()];
                    for t in 0..n {
                        for s in 0..batch {
                            let off = (t * batch + s) * d;
                            gw[s * k + col] += g.data()[off..off + d]
                                .iter()
                                .zip(&tx.data()[off..off + d])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                    }
                    acc(grads, *w, Tensor::from_parts(tw.shape().to_vec(), gw))?;
                }
            }
            Op::MeanAxis0(x) => {
                let tx = self.value(*x);
                let n = tx.shape()[0];
                let mut gx = Vec::with_capacity(tx.len());
                for _ in 0..n {
                    gx.extend(g.data().iter().map(|v| v / n as f64));
                }
                acc(grads, *x, Tensor::from_parts(tx.shape().to_vec(), gx))?;
            }
            Op::Loss { input, grad } => {
                let upstream = g.data()[0];
                acc(grads, *input, grad.map(|v| v * upstream))?;
            }
        }
        Ok(())
    }
}
