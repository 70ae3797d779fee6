use crate::numerics::Tensor;

/// Min-max rescale into `[-1, 1]`; a constant window maps to all zeros.
pub fn rescale_unit(window: &[f64]) -> Vec<f64> {
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; window.len()];
    }
    window
        .iter()
        .map(|&v| (2.0 * (v - lo) / span - 1.0).clamp(-1.0, 1.0))
        .collect()
}

/// Gramian angular summation field `cos(φ_j + φ_k)` with `φ = arccos(x̃)`.
pub fn gasf(window: &[f64]) -> Tensor {
    let x = rescale_unit(window);
    let s: Vec<f64> = x.iter().map(|v| (1.0 - v * v).max(0.0).sqrt()).collect();
    let l = x.len();
    let mut g = vec![0.0; l * l];
    for j in 0..l {
        for k in 0..l {
            g[j * l + k] = x[j] * x[k] - s[j] * s[k];
        }
    }
    Tensor::from_parts(vec![l, l], g)
}
