use crate::error::{Error, Result};
use crate::fusion::Task;
use crate::model::BatchTargets;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Metrics {
    Classification { accuracy: f64, macro_f1: f64, precision: f64 },
    Regression { mse: f64, mae: f64 },
}

impl Metrics {
    pub fn names(task: Task) -> &'static [&'static str] {
        match task {
            Task::Classification { .. } => &["accuracy", "macro_f1", "precision"],
            Task::Regression { .. } => &["mse", "mae"],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            Metrics::Classification {
                accuracy,
                macro_f1,
                precision,
            } => vec![accuracy, macro_f1, precision],
            Metrics::Regression { mse, mae } => vec![mse, mae],
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        match *self {
            Metrics::Classification { accuracy, .. } => Some(accuracy),
            Metrics::Regression { .. } => None,
        }
    }
}

fn ratio(num: usize, den: usize, what: &str, class: usize) -> f64 {
    if den == 0 {
        log::warn!("{what} undefined for class {class}; counted as 0");
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy with macro-averaged F1 and precision over `classes` classes.
pub fn classification_metrics(preds: &[usize], labels: &[usize], classes: usize) -> Result<Metrics> {
    if preds.is_empty() {
        return Err(Error::Data("metrics of an empty prediction set".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    let mut f1_sum = 0.0;
    let mut precision_sum = 0.0;
    for c in 0..classes {
        let tp = preds.iter().zip(labels).filter(|&(&p, &l)| p == c && l == c).count();
        let predicted = preds.iter().filter(|&&p| p == c).count();
        let actual = labels.iter().filter(|&&l| l == c).count();
        let precision = ratio(tp, predicted, "precision", c);
        let recall = ratio(tp, actual, "recall", c);
        precision_sum += precision;
        f1_sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            log::warn!("F1 undefined for class {c}; counted as 0");
            0.0
        };
    }
    Ok(Metrics::Classification {
        accuracy: correct as f64 / preds.len() as f64,
        macro_f1: f1_sum / classes as f64,
        precision: precision_sum / classes as f64,
    })
}

pub fn regression_metrics(pred: &[f64], target: &[f64]) -> Result<Metrics> {
    if pred.is_empty() {
        return Err(Error::Data("metrics of an empty prediction set".into()));
    }
    if pred.len() != target.len() {
        return Err(Error::shape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    let n = pred.len() as f64;
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mae = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok(Metrics::Regression { mse, mae })
}

/// Row-wise argmax of a `B × N` tensor.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let n = logits.last_dim();
    logits
        .data()
        .chunks(n)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Task metrics of head outputs against batch targets.
pub fn metrics(outputs: &Tensor, targets: &BatchTargets, task: Task) -> Result<Metrics> {
    match (task, targets) {
        (Task::Classification { classes }, BatchTargets::Classes(labels)) => {
            classification_metrics(&argmax_rows(outputs), labels, classes)
        }
        (Task::Regression { .. }, BatchTargets::Horizons(t)) => regression_metrics(outputs.data(), t.data()),
        _ => Err(Error::Data("targets do not match the task".into())),
    }
}
