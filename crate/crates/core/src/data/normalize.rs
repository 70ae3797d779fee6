use serde::{Deserialize, Serialize};

use super::{Sample, SeriesDataset, Target};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Apply,
    Invert,
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    means: Vec<f64>,
    stds: Vec<f64>,
    /// Channel whose statistics scale forecast targets.
    target_channel: Option<usize>,
}

const MIN_STD: f64 = 1e-12;

impl Normalizer {
    pub fn new(means: Vec<f64>, stds: Vec<f64>, target_channel: Option<usize>) -> Result<Self> {
        if means.len() != stds.len() || means.is_empty() {
            return Err(Error::Data("normalizer needs one mean and one std per channel".into()));
        }
        if let Some(ch) = stds.iter().position(|s| !(s.is_finite() && *s > MIN_STD)) {
            return Err(Error::ZeroVariance(format!("#{ch}")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("normalizer means".into()));
        }
        if target_channel.is_some_and(|t| t >= means.len()) {
            return Err(Error::config("target channel out of range"));
        }
        Ok(Self {
            means,
            stds,
            target_channel,
        })
    }

    /// Population statistics over `rows`; `names` label the channels in errors.
    pub fn fit_rows(rows: &[Vec<f64>], names: &[String], target_channel: Option<usize>) -> Result<Self> {
        let c = names.len();
        if rows.is_empty() {
            return Err(Error::Data("cannot fit a normalizer on zero rows".into()));
        }
        let n = rows.len() as f64;
        let mut means = vec![0.0; c];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; c];
        for r in rows {
            for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds: Vec<f64> = vars.iter().map(|s| (s / n).sqrt()).collect();
        if let Some(ch) = stds.iter().position(|&s| !(s > MIN_STD)) {
            return Err(Error::ZeroVariance(names[ch].clone()));
        }
        Self::new(means, stds, target_channel)
    }

    pub fn fit_dataset(ds: &SeriesDataset, target_channel: Option<usize>) -> Result<Self> {
        Self::fit_rows(&ds.rows, &ds.channels, target_channel)
    }

    /// Statistics over every time step of every sample window.
    pub fn fit_samples(samples: &[Sample], names: &[String], target_channel: Option<usize>) -> Result<Self> {
        let mut rows = Vec::new();
        for s in samples {
            let (c, l) = (s.series.shape()[0], s.series.shape()[1]);
            if c != names.len() {
                return Err(Error::shape(format!("sample has {c} channels, expected {}", names.len())));
            }
            for t in 0..l {
                rows.push((0..c).map(|ch| s.series.data()[ch * l + t]).collect());
            }
        }
        Self::fit_rows(&rows, names, target_channel)
    }

    pub fn channels(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn target_channel(&self) -> Option<usize> {
        self.target_channel
    }

    pub fn value(&self, channel: usize, v: f64, dir: Direction) -> f64 {
        match dir {
            Direction::Apply => (v - self.means[channel]) / self.stds[channel],
            Direction::Invert => v * self.stds[channel] + self.means[channel],
        }
    }

    /// Maps horizon values through the target channel's statistics.
    pub fn horizon(&self, values: &[f64], dir: Direction) -> Result<Vec<f64>> {
        let ch = self
            .target_channel
            .ok_or_else(|| Error::config("normalizer has no target channel"))?;
        Ok(values.iter().map(|&v| self.value(ch, v, dir)).collect())
    }

    pub fn dataset(&self, ds: &SeriesDataset, dir: Direction) -> Result<SeriesDataset> {
        if ds.channels.len() != self.channels() {
            return Err(Error::shape(format!(
                "dataset has {} channels, normalizer {}",
                ds.channels.len(),
                self.channels()
            )));
        }
        let mut out = ds.clone();
        for r in &mut out.rows {
            for (ch, v) in r.iter_mut().enumerate() {
                *v = self.value(ch, *v, dir);
            }
        }
        Ok(out)
    }

    /// Normalizes the window and any horizon target. The GASF image is
    /// unaffected by a positive affine map of its window, so it is kept.
    pub fn sample(&self, s: &Sample, dir: Direction) -> Result<Sample> {
        let (c, l) = (s.series.shape()[0], s.series.shape()[1]);
        if c != self.channels() {
            return Err(Error::shape(format!("sample has {c} channels, normalizer {}", self.channels())));
        }
        let data = s
            .series
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.value(i / l, v, dir))
            .collect();
        let target = match &s.target {
            Target::Horizon(h) if !h.is_empty() => Target::Horizon(self.horizon(h, dir)?),
            t => t.clone(),
        };
        Ok(Sample {
            series: Tensor::new(vec![c, l], data)?,
            image: s.image.clone(),
            target,
            position: s.position,
        })
    }
}
