//! Orthonormal Haar subband decomposition.
//!
//! Images get one 2-D level; series get a depth-2 packet so that both
//! modalities produce four equally sized subbands.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// The four subbands of one decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet {
    pub ll: Tensor,
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
    /// Number of trailing spatial axes (2 for images, 1 for series).
    spatial_dims: usize,
    /// Spatial extent of the source before any edge padding.
    source_extent: Vec<usize>,
}

impl SubbandSet {
    pub fn new(ll: Tensor, lh: Tensor, hl: Tensor, hh: Tensor, spatial_dims: usize) -> Result<Self> {
        for other in [&lh, &hl, &hh] {
            ll.expect_same_shape(other)?;
        }
        if ll.rank() < spatial_dims || !(1..=2).contains(&spatial_dims) {
            return Err(Error::shape("subband rank too small for its spatial dims"));
        }
        let r = ll.rank();
        let source_extent = match spatial_dims {
            2 => vec![ll.shape()[r - 2] * 2, ll.shape()[r - 1] * 2],
            _ => vec![ll.shape()[r - 1] * 4],
        };
        Ok(Self {
            ll,
            lh,
            hl,
            hh,
            spatial_dims,
            source_extent,
        })
    }

    pub fn spatial_dims(&self) -> usize {
        self.spatial_dims
    }

    pub fn source_extent(&self) -> &[usize] {
        &self.source_extent
    }

    pub fn bands(&self) -> [&Tensor; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    pub fn energy(&self) -> f64 {
        self.bands()
            .iter()
            .map(|b| b.data().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Replicates the last row/column so both trailing axes are even.
pub fn pad_edge_2d(image: &Tensor) -> Result<Tensor> {
    if image.rank() < 2 {
        return Err(Error::shape("image needs two trailing axes"));
    }
    let r = image.rank();
    let (h, w) = (image.shape()[r - 2], image.shape()[r - 1]);
    let (ph, pw) = (h + h % 2, w + w % 2);
    if (ph, pw) == (h, w) {
        return Ok(image.clone());
    }
    let planes = image.len() / (h * w).max(1);
    let mut out = Vec::with_capacity(planes * ph * pw);
    for p in 0..planes {
        let src = &image.data()[p * h * w..][..h * w];
        for i in 0..ph {
            let si = i.min(h - 1);
            for j in 0..pw {
                out.push(src[si * w + j.min(w - 1)]);
            }
        }
    }
    let mut shape = image.shape()[..r - 2].to_vec();
    shape.extend([ph, pw]);
    Tensor::new(shape, out)
}

/// Replicates the last sample so the trailing axis is a multiple of `multiple`.
pub fn pad_edge_1d(series: &Tensor, multiple: usize) -> Result<Tensor> {
    let l = series.last_dim();
    if series.rank() == 0 || l == 0 {
        return Err(Error::shape("cannot pad an empty series"));
    }
    let pl = l.div_ceil(multiple) * multiple;
    if pl == l {
        return Ok(series.clone());
    }
    let rows = series.len() / l;
    let mut out = Vec::with_capacity(rows * pl);
    for r in 0..rows {
        let src = &series.data()[r * l..][..l];
        out.extend_from_slice(src);
        out.extend(std::iter::repeat(src[l - 1]).take(pl - l));
    }
    let mut shape = series.shape().to_vec();
    *shape.last_mut().unwrap() = pl;
    Tensor::new(shape, out)
}

/// One-level 2-D Haar transform over the two trailing axes (both must be even).
pub fn haar_dwt2d(image: &Tensor) -> Result<SubbandSet> {
    if image.rank() < 2 || image.is_empty() {
        return Err(Error::shape(format!(
            "haar_dwt2d needs a non-empty tensor with two trailing axes, got {:?}",
            image.shape()
        )));
    }
    let r = image.rank();
    let (h, w) = (image.shape()[r - 2], image.shape()[r - 1]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!(
            "haar_dwt2d needs even extents, got {h}x{w} (use haar_dwt2d_padded)"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let planes = image.len() / (h * w);
    let n = planes * oh * ow;
    let (mut ll, mut lh, mut hl, mut hh) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let x = image.data();
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        for i in 0..oh {
            for j in 0..ow {
                let a = src[2 * i * w + 2 * j];
                let b = src[2 * i * w + 2 * j + 1];
                let c = src[(2 * i + 1) * w + 2 * j];
                let d = src[(2 * i + 1) * w + 2 * j + 1];
                let o = (p * oh + i) * ow + j;
                ll[o] = (a + b + c + d) / 2.0;
                lh[o] = (a - b + c - d) / 2.0;
                hl[o] = (a + b - c - d) / 2.0;
                hh[o] = (a - b - c + d) / 2.0;
            }
        }
    }
    let mut shape = image.shape()[..r - 2].to_vec();
    shape.extend([oh, ow]);
    let mk = |v| Tensor::from_parts(shape.clone(), v);
    SubbandSet::new(mk(ll), mk(lh), mk(hl), mk(hh), 2)
}

/// [`haar_dwt2d`] after edge padding; the inverse crops back to the source extent.
pub fn haar_dwt2d_padded(image: &Tensor) -> Result<SubbandSet> {
    if image.rank() < 2 || image.is_empty() {
        return Err(Error::shape("haar_dwt2d needs a non-empty image"));
    }
    let r = image.rank();
    let extent = vec![image.shape()[r - 2], image.shape()[r - 1]];
    let mut set = haar_dwt2d(&pad_edge_2d(image)?)?;
    set.source_extent = extent;
    Ok(set)
}

/// Exact inverse of [`haar_dwt2d`].
pub fn haar_idwt2d(subbands: &SubbandSet) -> Result<Tensor> {
    if subbands.spatial_dims != 2 {
        return Err(Error::shape("haar_idwt2d needs 2-D subbands"));
    }
    let SubbandSet { ll, lh, hl, hh, .. } = subbands;
    for other in [lh, hl, hh] {
        ll.expect_same_shape(other)?;
    }
    let r = ll.rank();
    let (oh, ow) = (ll.shape()[r - 2], ll.shape()[r - 1]);
    let (h, w) = (oh * 2, ow * 2);
    let planes = ll.len() / (oh * ow).max(1);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        for i in 0..oh {
            for j in 0..ow {
                let o = (p * oh + i) * ow + j;
                let (s0, s1, s2, s3) = (ll.data()[o], lh.data()[o], hl.data()[o], hh.data()[o]);
                let dst = &mut out[p * h * w..][..h * w];
                dst[2 * i * w + 2 * j] = (s0 + s1 + s2 + s3) / 2.0;
                dst[2 * i * w + 2 * j + 1] = (s0 - s1 + s2 - s3) / 2.0;
                dst[(2 * i + 1) * w + 2 * j] = (s0 + s1 - s2 - s3) / 2.0;
                dst[(2 * i + 1) * w + 2 * j + 1] = (s0 - s1 - s2 + s3) / 2.0;
            }
        }
    }
    let (sh, sw) = (subbands.source_extent[0], subbands.source_extent[1]);
    let mut shape = ll.shape()[..r - 2].to_vec();
    if (sh, sw) == (h, w) {
        shape.extend([h, w]);
        return Tensor::new(shape, out);
    }
    let mut cropped = Vec::with_capacity(planes * sh * sw);
    for p in 0..planes {
        for i in 0..sh {
            cropped.extend_from_slice(&out[p * h * w + i * w..][..sw]);
        }
    }
    shape.extend([sh, sw]);
    Tensor::new(shape, cropped)
}

/// Depth-2 Haar packet over the trailing axis (length must be a multiple of 4).
///
/// Per block `[a, b, c, d]` the bands are approximation-approximation (`ll`),
/// approximation-detail (`lh`), detail-approximation (`hl`) and
/// detail-detail (`hh`).
pub fn wavelet_packet1d(series: &Tensor) -> Result<SubbandSet> {
    let l = series.last_dim();
    if series.rank() == 0 || series.is_empty() {
        return Err(Error::shape("wavelet_packet1d needs a non-empty series"));
    }
    if l % 4 != 0 {
        return Err(Error::shape(format!(
            "wavelet_packet1d needs a length divisible by 4, got {l}"
        )));
    }
    let q = l / 4;
    let rows = series.len() / l;
    let n = rows * q;
    let (mut aa, mut ad, mut da, mut dd) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for r in 0..rows {
        let src = &series.data()[r * l..][..l];
        for k in 0..q {
            let [a, b, c, d] = [src[4 * k], src[4 * k + 1], src[4 * k + 2], src[4 * k + 3]];
            let o = r * q + k;
            aa[o] = (a + b + c + d) / 2.0;
            ad[o] = (a + b - c - d) / 2.0;
            da[o] = (a - b + c - d) / 2.0;
            dd[o] = (a - b - c + d) / 2.0;
        }
    }
    let mut shape = series.shape().to_vec();
    *shape.last_mut().unwrap() = q;
    let mk = |v| Tensor::from_parts(shape.clone(), v);
    SubbandSet::new(mk(aa), mk(ad), mk(da), mk(dd), 1)
}

/// Exact inverse of [`wavelet_packet1d`].
pub fn wavelet_packet1d_inverse(subbands: &SubbandSet) -> Result<Tensor> {
    if subbands.spatial_dims != 1 {
        return Err(Error::shape("packet inverse needs 1-D subbands"));
    }
    let SubbandSet { ll, lh, hl, hh, .. } = subbands;
    for other in [lh, hl, hh] {
        ll.expect_same_shape(other)?;
    }
    let q = ll.last_dim();
    let rows = ll.len() / q.max(1);
    let l = q * 4;
    let mut out = vec![0.0; rows * l];
    for r in 0..rows {
        for k in 0..q {
            let o = r * q + k;
            let (aa, ad, da, dd) = (ll.data()[o], lh.data()[o], hl.data()[o], hh.data()[o]);
            let dst = &mut out[r * l + 4 * k..][..4];
            dst[0] = (aa + ad + da + dd) / 2.0;
            dst[1] = (aa + ad - da - dd) / 2.0;
            dst[2] = (aa - ad + da - dd) / 2.0;
            dst[3] = (aa - ad - da + dd) / 2.0;
        }
    }
    let mut shape = ll.shape().to_vec();
    *shape.last_mut().unwrap() = l;
    Tensor::new(shape, out)
}

fn channel_split(shape: &[usize], spatial_dims: usize) -> (usize, usize, usize) {
    let r = shape.len();
    if r == spatial_dims {
        return (1, 1, shape.iter().product());
    }
    let ch_axis = r - spatial_dims - 1;
    let outer = shape[..ch_axis].iter().product();
    let spatial = shape[ch_axis + 1..].iter().product();
    (outer, shape[ch_axis], spatial)
}

/// Concatenates the bands along the channel axis in the order LL, LH, HL, HH.
///
/// A band without a channel axis gains one of extent 4.
pub fn subband_stack(subbands: &SubbandSet) -> Tensor {
    let shape = subbands.ll.shape();
    let sd = subbands.spatial_dims;
    let (outer, channels, spatial) = channel_split(shape, sd);
    let block = channels * spatial;
    let mut out = Vec::with_capacity(4 * subbands.ll.len());
    for o in 0..outer {
        for band in subbands.bands() {
            out.extend_from_slice(&band.data()[o * block..][..block]);
        }
    }
    let r = shape.len();
    let new_shape = if r == sd {
        let mut s = vec![4];
        s.extend_from_slice(shape);
        s
    } else {
        let mut s = shape.to_vec();
        s[r - sd - 1] *= 4;
        s
    };
    Tensor::from_parts(new_shape, out)
}

/// Inverse of [`subband_stack`] for tensors that carry a channel axis.
pub fn subband_unstack(stacked: &Tensor, spatial_dims: usize) -> Result<SubbandSet> {
    if stacked.rank() < spatial_dims + 1 {
        return Err(Error::shape("stacked tensor has no channel axis"));
    }
    let (outer, channels4, spatial) = channel_split(stacked.shape(), spatial_dims);
    if channels4 % 4 != 0 {
        return Err(Error::shape("stacked channel count is not a multiple of 4"));
    }
    let channels = channels4 / 4;
    let block = channels * spatial;
    let mut bands: [Vec<f64>; 4] = Default::default();
    for o in 0..outer {
        for (k, band) in bands.iter_mut().enumerate() {
            band.extend_from_slice(&stacked.data()[(o * 4 + k) * block..][..block]);
        }
    }
    let r = stacked.rank();
    let mut shape = stacked.shape().to_vec();
    shape[r - spatial_dims - 1] = channels;
    let [a, b, c, d] = bands.map(|v| Tensor::from_parts(shape.clone(), v));
    SubbandSet::new(a, b, c, d, spatial_dims)
}
