//! Iterative radix-2 FFT.
//!
//! Forward transforms are unnormalized; the inverse applies the `1/N` factor,
//! so `ifft(fft(x)) == x` up to rounding.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex values with a shape, produced by the forward transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    shape: Vec<usize>,
    values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(shape: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::shape(format!(
                "spectrum shape {:?} does not match {} values",
                shape,
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-bin magnitudes.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }
}

/// Smallest power of two that is `>= n` (and at least 1).
pub fn padded_len(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// In-place transform of a power-of-two length buffer.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if n == 1 {
        return Ok(());
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // twiddles computed directly rather than by recurrence to keep
                // rounding error flat in n
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

/// Complex-to-complex transform, returning a new buffer.
pub fn fft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, inverse)?;
    Ok(buf)
}

/// Forward transform of a real sequence.
pub fn fft1d(x: &[f64]) -> Result<ComplexSpectrum> {
    let mut buf: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    fft_in_place(&mut buf, false)?;
    ComplexSpectrum::new(vec![buf.len()], buf)
}

/// Inverse transform, returning the real part.
pub fn ifft1d(spectrum: &ComplexSpectrum) -> Result<Vec<f64>> {
    let mut buf = spectrum.values.clone();
    fft_in_place(&mut buf, true)?;
    Ok(buf.into_iter().map(|c| c.re).collect())
}
