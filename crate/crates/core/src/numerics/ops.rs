//! Forward and backward kernels for the dense ops used by the model.
//!
//! Every kernel here is a pure function of its inputs. The tape in
//! [`super::tape`] records which kernel ran and calls the matching backward.

use crate::error::{Error, Result};

use super::Tensor;

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, n, inner) = axis_extents(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..n {
                let e = (src[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..n {
                out[at(k)] /= total;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Vector-Jacobian product of softmax given its output `y`.
pub fn softmax_backward(y: &Tensor, grad: &Tensor, axis: usize) -> Result<Tensor> {
    y.expect_same_shape(grad)?;
    let (outer, n, inner) = axis_extents(y.shape(), axis)?;
    let (yv, gv) = (y.data(), grad.data());
    let mut out = vec![0.0; yv.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let dot: f64 = (0..n).map(|k| yv[at(k)] * gv[at(k)]).sum();
            for k in 0..n {
                out[at(k)] = yv[at(k)] * (gv[at(k)] - dot);
            }
        }
    }
    Ok(Tensor::from_parts(y.shape().to_vec(), out))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Result<Tensor> {
    x.zip_map(grad, |v, g| if v > 0.0 { g } else { 0.0 })
}

/// Output extent of a sliding window along one axis.
pub fn window_extent(size: usize, window: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || window == 0 {
        return Err(Error::shape("window and stride must be positive"));
    }
    let padded = size + 2 * padding;
    if window > padded {
        return Err(Error::shape(format!(
            "window {window} larger than padded extent {padded}"
        )));
    }
    Ok((padded - window) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

fn conv_geometry(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGeom> {
    input.expect_rank(4, "conv2d input")?;
    kernels.expect_rank(4, "conv2d kernels")?;
    let (batch, in_c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (out_c, kc, kh, kw) = (
        kernels.shape()[0],
        kernels.shape()[1],
        kernels.shape()[2],
        kernels.shape()[3],
    );
    if kc != in_c {
        return Err(Error::shape(format!(
            "conv2d: input has {in_c} channels but kernels expect {kc}"
        )));
    }
    let oh = window_extent(h, kh, stride, padding)?;
    let ow = window_extent(w, kw, stride, padding)?;
    Ok(ConvGeom {
        batch,
        in_c,
        h,
        w,
        out_c,
        kh,
        kw,
        oh,
        ow,
        stride,
        pad: padding,
    })
}

/// 2-D cross-correlation over a `B×C×H×W` input with `K×C×kh×kw` kernels.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input, kernels, stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_c] {
            return Err(Error::shape(format!(
                "conv2d bias must have shape [{}], got {:?}",
                g.out_c,
                b.shape()
            )));
        }
    }
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; g.batch * g.out_c * g.oh * g.ow];
    for b in 0..g.batch {
        for oc in 0..g.out_c {
            let base = (b * g.out_c + oc) * g.oh * g.ow;
            let bias_v = bias.map_or(0.0, |t| t.data()[oc]);
            out[base..base + g.oh * g.ow].fill(bias_v);
            for ic in 0..g.in_c {
                let xin = &x[(b * g.in_c + ic) * g.h * g.w..][..g.h * g.w];
                let kk = &k[(oc * g.in_c + ic) * g.kh * g.kw..][..g.kh * g.kw];
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let kv = kk[ki * g.kw + kj];
                        if kv == 0.0 {
                            continue;
                        }
                        for oi in 0..g.oh {
                            let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                            if ii < 0 || ii >= g.h as isize {
                                continue;
                            }
                            let row = &xin[ii as usize * g.w..][..g.w];
                            let orow = &mut out[base + oi * g.ow..][..g.ow];
                            for (oj, o) in orow.iter_mut().enumerate() {
                                let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                                if jj >= 0 && jj < g.w as isize {
                                    *o += kv * row[jj as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.batch, g.out_c, g.oh, g.ow], out))
}

/// Gradients of [`conv2d`] with respect to input, kernels and bias.
pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad: &Tensor,
    stride: usize,
    padding: usize,
    need_input: bool,
) -> Result<Conv2dGrads> {
    let g = conv_geometry(input, kernels, stride, padding)?;
    if grad.shape() != [g.batch, g.out_c, g.oh, g.ow] {
        return Err(Error::shape(format!(
            "conv2d upstream gradient has shape {:?}",
            grad.shape()
        )));
    }
    let x = input.data();
    let k = kernels.data();
    let gy = grad.data();
    let mut gx = vec![0.0; if need_input { x.len() } else { 0 }];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; g.out_c];
    for b in 0..g.batch {
        for oc in 0..g.out_c {
            let gbase = (b * g.out_c + oc) * g.oh * g.ow;
            let gslice = &gy[gbase..gbase + g.oh * g.ow];
            gb[oc] += gslice.iter().sum::<f64>();
            for ic in 0..g.in_c {
                let xoff = (b * g.in_c + ic) * g.h * g.w;
                let koff = (oc * g.in_c + ic) * g.kh * g.kw;
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let kv = k[koff + ki * g.kw + kj];
                        let mut acc = 0.0;
                        for oi in 0..g.oh {
                            let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                            if ii < 0 || ii >= g.h as isize {
                                continue;
                            }
                            let ii = ii as usize;
                            for oj in 0..g.ow {
                                let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                                if jj < 0 || jj >= g.w as isize {
                                    continue;
                                }
                                let go = gslice[oi * g.ow + oj];
                                let xi = xoff + ii * g.w + jj as usize;
                                acc += go * x[xi];
                                if need_input {
                                    gx[xi] += go * kv;
                                }
                            }
                        }
                        gk[koff + ki * g.kw + kj] += acc;
                    }
                }
            }
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::from_parts(
            if need_input { input.shape().to_vec() } else { vec![0] },
            gx,
        ),
        kernels: Tensor::from_parts(kernels.shape().to_vec(), gk),
        bias: Tensor::from_parts(vec![g.out_c], gb),
    })
}

/// Mean over each `window×window` patch of the two trailing axes.
pub fn avg_pool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    if input.rank() < 2 {
        return Err(Error::shape("avg_pool2d needs at least two axes"));
    }
    let r = input.rank();
    let (h, w) = (input.shape()[r - 2], input.shape()[r - 1]);
    if window > h || window > w {
        return Err(Error::shape(format!(
            "pool window {window} larger than input {h}x{w}"
        )));
    }
    let oh = window_extent(h, window, stride, 0)?;
    let ow = window_extent(w, window, stride, 0)?;
    let planes = input.len() / (h * w);
    let scale = 1.0 / (window * window) as f64;
    let x = input.data();
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        let dst = &mut out[p * oh * ow..][..oh * ow];
        for oi in 0..oh {
            for oj in 0..ow {
                let mut acc = 0.0;
                for di in 0..window {
                    let row = &src[(oi * stride + di) * w + oj * stride..][..window];
                    acc += row.iter().sum::<f64>();
                }
                dst[oi * ow + oj] = acc * scale;
            }
        }
    }
    let mut shape = input.shape()[..r - 2].to_vec();
    shape.extend([oh, ow]);
    Ok(Tensor::from_parts(shape, out))
}

pub fn avg_pool2d_backward(
    input_shape: &[usize],
    grad: &Tensor,
    window: usize,
    stride: usize,
) -> Result<Tensor> {
    let r = input_shape.len();
    let (h, w) = (input_shape[r - 2], input_shape[r - 1]);
    let oh = window_extent(h, window, stride, 0)?;
    let ow = window_extent(w, window, stride, 0)?;
    let planes: usize = input_shape[..r - 2].iter().product();
    if grad.len() != planes * oh * ow {
        return Err(Error::shape("avg_pool2d upstream gradient size mismatch"));
    }
    let scale = 1.0 / (window * window) as f64;
    let gy = grad.data();
    let mut gx = vec![0.0; planes * h * w];
    for p in 0..planes {
        for oi in 0..oh {
            for oj in 0..ow {
                let g = gy[(p * oh + oi) * ow + oj] * scale;
                for di in 0..window {
                    for dj in 0..window {
                        gx[p * h * w + (oi * stride + di) * w + oj * stride + dj] += g;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(input_shape.to_vec(), gx))
}

/// Affine map `x Wᵀ + b` along the trailing axis of `x`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    weight.expect_rank(2, "linear weight")?;
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    if input.last_dim() != d_in || input.rank() == 0 {
        return Err(Error::shape(format!(
            "linear: input trailing dim {} does not match weight input width {d_in}",
            input.last_dim()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [d_out] {
            return Err(Error::shape(format!(
                "linear bias must have shape [{d_out}], got {:?}",
                b.shape()
            )));
        }
    }
    let rows = input.len() / d_in;
    let x = input.data();
    let wv = weight.data();
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        let xr = &x[r * d_in..][..d_in];
        for o in 0..d_out {
            let wr = &wv[o * d_in..][..d_in];
            let dot: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            out[r * d_out + o] = dot + bias.map_or(0.0, |b| b.data()[o]);
        }
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().expect("rank checked") = d_out;
    Ok(Tensor::from_parts(shape, out))
}

pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    grad: &Tensor,
    need_input: bool,
) -> Result<LinearGrads> {
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    let rows = input.len() / d_in;
    if grad.len() != rows * d_out {
        return Err(Error::shape("linear upstream gradient size mismatch"));
    }
    let x = input.data();
    let wv = weight.data();
    let gy = grad.data();
    let mut gx = vec![0.0; if need_input { x.len() } else { 0 }];
    let mut gw = vec![0.0; wv.len()];
    let mut gb = vec![0.0; d_out];
    for r in 0..rows {
        let xr = &x[r * d_in..][..d_in];
        for o in 0..d_out {
            let g = gy[r * d_out + o];
            if g == 0.0 {
                continue;
            }
            gb[o] += g;
            let gwr = &mut gw[o * d_in..][..d_in];
            for (acc, xv) in gwr.iter_mut().zip(xr) {
                *acc += g * xv;
            }
            if need_input {
                let wr = &wv[o * d_in..][..d_in];
                let gxr = &mut gx[r * d_in..][..d_in];
                for (acc, wv) in gxr.iter_mut().zip(wr) {
                    *acc += g * wv;
                }
            }
        }
    }
    Ok(LinearGrads {
        input: Tensor::from_parts(
            if need_input { input.shape().to_vec() } else { vec![0] },
            gx,
        ),
        weight: Tensor::from_parts(weight.shape().to_vec(), gw),
        bias: Tensor::from_parts(vec![d_out], gb),
    })
}
