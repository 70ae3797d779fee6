use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    #[default]
    Mse,
    Mae,
}

/// Softmax cross-entropy averaged over the batch, with its gradient
/// `(softmax(logits) - onehot) / B`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    logits.expect_rank(2, "logits")?;
    let (b, n) = (logits.shape()[0], logits.shape()[1]);
    if b != labels.len() {
        return Err(Error::shape(format!("{b} logit rows but {} labels", labels.len())));
    }
    if b == 0 {
        return Err(Error::Data("cross entropy of an empty batch".into()));
    }
    let p = softmax(logits, 1)?;
    let mut grad = p.data().to_vec();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= n {
            return Err(Error::Data(format!("label {y} outside 0..{n}")));
        }
        let row = logits.outer(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[i * n + y] -= 1.0;
    }
    let scale = 1.0 / b as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, Tensor::new(vec![b, n], grad)?))
}

/// Mean loss over every element, with its gradient.
pub fn regression_loss(pred: &Tensor, target: &Tensor, kind: RegressionLoss) -> Result<(f64, Tensor)> {
    pred.expect_same_shape(target)?;
    if pred.is_empty() {
        return Err(Error::Data("regression loss of an empty batch".into()));
    }
    let n = pred.len() as f64;
    let (loss, grad) = match kind {
        RegressionLoss::Mse => (
            pred.zip_map(target, |p, t| (p - t) * (p - t))?.sum() / n,
            pred.zip_map(target, |p, t| 2.0 * (p - t) / n)?,
        ),
        RegressionLoss::Mae => (
            pred.zip_map(target, |p, t| (p - t).abs())?.sum() / n,
            pred.zip_map(target, |p, t| {
                if p > t {
                    1.0 / n
                } else if p < t {
                    -1.0 / n
                } else {
                    0.0
                }
            })?,
        ),
    };
    Ok((loss, grad))
}
