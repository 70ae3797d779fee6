//! Losses, metrics, optimizer, the training loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod metrics;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, RngState, MAGIC, VERSION};
pub use loss::{cross_entropy, regression_loss, RegressionLoss};
pub use metrics::{argmax_rows, classification_metrics, metrics, regression_metrics, Metrics};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{Activations, BatchTargets, Model};
use crate::numerics::{Tape, Tensor};
use crate::param::Parameterized;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Maximum global gradient norm.
    pub grad_clip: f64,
    pub regression_loss: RegressionLoss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            patience: 10,
            grad_clip: 5.0,
            regression_loss: RegressionLoss::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::config("epochs, batch_size and patience must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate must be finite and non-negative"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::config("grad_clip must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Loss of head outputs against batch targets, with the output gradient.
pub fn batch_loss(outputs: &Tensor, targets: &BatchTargets, kind: RegressionLoss) -> Result<(f64, Tensor)> {
    match targets {
        BatchTargets::Classes(labels) => cross_entropy(outputs, labels),
        BatchTargets::Horizons(t) => regression_loss(outputs, t, kind),
        BatchTargets::None => Err(Error::Data("batch has no targets".into())),
    }
}

/// Outcome of evaluating a sample set in fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Sample-weighted mean loss.
    pub loss: f64,
    pub metrics: Metrics,
    /// `n × out` head outputs.
    pub outputs: Tensor,
}

pub fn predict_all(model: &Model, samples: &[Sample], batch_size: usize) -> Result<Tensor> {
    if samples.is_empty() {
        return Err(Error::Data("nothing to predict".into()));
    }
    let mut out = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        out.extend(model.predict(&model.prepare(&refs)?)?.into_data());
    }
    let width = model.task().output_width();
    Tensor::new(vec![samples.len(), width], out)
}

pub fn evaluate(model: &Model, samples: &[Sample], batch_size: usize, kind: RegressionLoss) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let mut loss = 0.0;
    let mut outputs = Vec::new();
    let mut targets = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = model.prepare(&refs)?;
        let y = model.predict(&batch)?;
        loss += batch_loss(&y, &batch.targets, kind)?.0 * chunk.len() as f64;
        outputs.extend(y.into_data());
        targets.push(batch.targets);
    }
    let width = model.task().output_width();
    let outputs = Tensor::new(vec![samples.len(), width], outputs)?;
    let all = match &targets[0] {
        BatchTargets::Classes(_) => BatchTargets::Classes(
            targets
                .iter()
                .flat_map(|t| match t {
                    BatchTargets::Classes(c) => c.clone(),
                    _ => Vec::new(),
                })
                .collect(),
        ),
        BatchTargets::Horizons(_) => {
            let data: Vec<f64> = targets
                .iter()
                .flat_map(|t| match t {
                    BatchTargets::Horizons(h) => h.data().to_vec(),
                    _ => Vec::new(),
                })
                .collect();
            BatchTargets::Horizons(Tensor::new(vec![samples.len(), width], data)?)
        }
        BatchTargets::None => BatchTargets::None,
    };
    Ok(Evaluation {
        loss: loss / samples.len() as f64,
        metrics: metrics(&outputs, &all, model.task())?,
        outputs,
    })
}

/// Per-step population activity of one probe batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Traces {
    /// Mean image-encoder spike rate per time step.
    pub image: Vec<f64>,
    /// Mean series-encoder spike rate per time step.
    pub series: Vec<f64>,
    /// Mean fused activation per frequency bin.
    pub fused: Vec<f64>,
}

impl Traces {
    pub fn of(act: &Activations) -> Self {
        let per_outer = |t: &Tensor| -> Vec<f64> {
            let n = t.shape()[0];
            (0..n)
                .map(|i| {
                    let row = t.outer(i);
                    row.iter().sum::<f64>() / row.len().max(1) as f64
                })
                .collect()
        };
        Self {
            image: per_outer(act.image.values()),
            series: per_outer(act.series.values()),
            fused: per_outer(&act.fused),
        }
    }

    pub fn components(&self) -> [(&'static str, &[f64]); 3] {
        [
            ("image_encoder", &self.image),
            ("series_encoder", &self.series),
            ("fused", &self.fused),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub metrics: Metrics,
    pub traces: Traces,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    EarlyStopped,
    Observer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Training-set loss before the first update.
    pub initial_loss: f64,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stop: StopReason,
}

/// One optimizer step on `batch`; returns the batch loss.
fn train_step(
    model: &mut Model,
    batch: &[&Sample],
    cfg: &TrainConfig,
    adam: &mut AdamState,
) -> Result<f64> {
    let prepared = model.prepare(batch)?;
    let mut tape = Tape::new();
    let params = model.bind(&mut tape);
    let vars = model.forward(&mut tape, &params, &prepared)?;
    let (loss, grad) = batch_loss(tape.value(vars.output), &prepared.targets, cfg.regression_loss)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let loss_var = tape.loss(vars.output, loss, grad)?;
    let grads = tape.backward(loss_var, &Tensor::scalar(1.0))?;
    let mut g: Vec<Tensor> = params
        .iter()
        .map(|&p| grads.get_or_zeros(p, tape.value(p).shape()))
        .collect();
    if let Some(bad) = g.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {}", model.params()[bad].0)));
    }
    clip_grad_norm(&mut g, cfg.grad_clip);
    adam_step(&mut model.params_mut(), &g, adam, &cfg.adam())?;
    Ok(loss)
}

/// Trains `model` in place, keeping the parameters of the epoch with the
/// lowest validation loss. `observer` sees every epoch and may end training.
pub fn train_loop(
    model: &mut Model,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut observer: impl FnMut(&EpochRecord) -> Control,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let initial_loss = evaluate(model, train, cfg.batch_size, cfg.regression_loss)?.loss;
    let probe: Vec<&Sample> = val.iter().take(cfg.batch_size).collect();
    let mut adam = AdamState::new(model.params().into_iter().map(|(_, t)| t));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, Vec<(String, Tensor)>)> = None;
    let mut since_best = 0;
    let mut stop = StopReason::Completed;

    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            total += train_step(model, &batch, cfg, &mut adam)? * batch.len() as f64;
        }
        let eval = evaluate(model, val, cfg.batch_size, cfg.regression_loss)?;
        let traces = Traces::of(&model.activations(&model.prepare(&probe)?)?);
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: eval.loss,
            metrics: eval.metrics,
            traces,
        };
        log::info!(
            "epoch {epoch}: train {:.6} val {:.6} {:?}",
            record.train_loss,
            record.val_loss,
            record.metrics.values()
        );
        if best.as_ref().is_none_or(|(l, _, _)| record.val_loss < *l) {
            let snapshot = model.params().into_iter().map(|(n, t)| (n, t.clone())).collect();
            best = Some((record.val_loss, epoch, snapshot));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let control = observer(&record);
        records.push(record);
        if control == Control::Stop {
            stop = StopReason::Observer;
            break;
        }
        if since_best >= cfg.patience {
            stop = StopReason::EarlyStopped;
            break;
        }
    }
    let (_, best_epoch, snapshot) = best.expect("at least one epoch ran");
    model.load_params(&snapshot)?;
    Ok(History {
        records,
        initial_loss,
        best_epoch,
        stop,
    })
}
