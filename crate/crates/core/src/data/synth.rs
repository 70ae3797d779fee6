//! Seeded generators for desk-scale experiments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Sample, SeriesDataset, Target};
use crate::error::Result;
use crate::numerics::Tensor;

pub const NOISE_STD: f64 = 0.1;
/// AR(2) coefficients of the forecast generator.
pub const AR_COEFFS: (f64, f64) = (1.5, -0.75);
const AR_BURN_IN: usize = 64;

pub const ETT_CHANNELS: [&str; 7] = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"];
/// 2016-07-01 00:00:00 UTC.
const ETT_START: i64 = 1_467_331_200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthTask {
    /// Class `c` is a unit sinusoid with `class_frequency(c)` cycles per window.
    Classify { classes: usize, len: usize },
    /// Independent AR(2) realizations; target is the last `horizon` values.
    Forecast { lookback: usize, horizon: usize },
}

pub fn class_frequency(class: usize) -> f64 {
    1.0 + 3.0 * class as f64
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite positive std")
}

pub fn synth_multimodal(seed: u64, n: usize, task: SynthTask) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(NOISE_STD);
    (0..n)
        .map(|i| match task {
            SynthTask::Classify { classes, len } => {
                let c = i % classes.max(1);
                let f = class_frequency(c);
                let phase = rng.gen_range(0.0..2.0 * PI);
                let x: Vec<f64> = (0..len)
                    .map(|t| (2.0 * PI * f * t as f64 / len as f64 + phase).sin() + noise.sample(&mut rng))
                    .collect();
                Sample::from_window(Tensor::new(vec![1, len], x)?, 0, Target::Class(c), i)
            }
            SynthTask::Forecast { lookback, horizon } => {
                let (a1, a2) = AR_COEFFS;
                let total = AR_BURN_IN + lookback + horizon;
                let mut x = vec![0.0; total];
                for t in 2..total {
                    x[t] = a1 * x[t - 1] + a2 * x[t - 2] + noise.sample(&mut rng);
                }
                let x = &x[AR_BURN_IN..];
                let target = Target::Horizon(x[lookback..].to_vec());
                Sample::from_window(Tensor::new(vec![1, lookback], x[..lookback].to_vec())?, 0, target, i)
            }
        })
        .collect()
}

/// Hourly transformer-load-like series with daily and weekly seasonality.
pub fn synth_ett(seed: u64, rows: usize) -> SeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shock = normal(0.3);
    let c = ETT_CHANNELS.len();
    let params: Vec<(f64, f64, f64, f64, f64)> = (0..c)
        .map(|_| {
            (
                rng.gen_range(2.0..12.0),
                rng.gen_range(1.0..3.0),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.3..1.2),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let mut noise = vec![0.0; c];
    let mut out = Vec::with_capacity(rows);
    for t in 0..rows {
        let th = t as f64;
        let mut row = Vec::with_capacity(c);
        for (ch, &(level, daily, dp, weekly, wp)) in params.iter().enumerate() {
            noise[ch] = 0.8 * noise[ch] + shock.sample(&mut rng);
            let v = level + daily * (2.0 * PI * th / 24.0 + dp).sin() + weekly * (2.0 * PI * th / 168.0 + wp).sin();
            row.push(v + noise[ch]);
        }
        // oil temperature lags the high-use load
        let lag = out.last().map_or(row[0], |prev: &Vec<f64>| prev[0]);
        row[c - 1] += 0.3 * (lag - params[0].0);
        out.push(row);
    }
    SeriesDataset {
        name: "synthetic_ett".into(),
        channels: ETT_CHANNELS.iter().map(|s| s.to_string()).collect(),
        timestamps: (0..rows as i64).map(|t| ETT_START + 3600 * t).collect(),
        rows: out,
        labels: None,
        filled_cells: 0,
    }
}

/// ECG-like beat windows: a QRS spike with class-dependent width and
/// amplitude, plus P and T waves whose T polarity flips on odd classes.
pub fn synth_beats(seed: u64, n: usize, len: usize, classes: usize) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(0.05);
    let bump = |t: f64, mu: f64, w: f64| (-(t - mu) * (t - mu) / (2.0 * w * w)).exp();
    (0..n)
        .map(|i| {
            let c = i % classes.max(1);
            let cf = c as f64;
            let shift = rng.gen_range(-0.03..0.03);
            let width = 0.012 + 0.01 * cf;
            let amp = 1.0 + 0.25 * cf;
            let t_sign = if c % 2 == 1 { -1.0 } else { 1.0 };
            let x: Vec<f64> = (0..len)
                .map(|k| {
                    let u = k as f64 / len as f64;
                    0.15 * bump(u, 0.25 + shift, 0.03)
                        + amp * bump(u, 0.5 + shift, width)
                        + t_sign * 0.3 * bump(u, 0.75 + shift, 0.05)
                        + noise.sample(&mut rng)
                })
                .collect();
            Sample::from_window(Tensor::new(vec![1, len], x)?, 0, Target::Class(c), i)
        })
        .collect()
}
