//! Dataset ingestion, windowing and sample construction.

mod csv_io;
mod gasf;
mod normalize;
mod split;
pub mod synth;

pub use csv_io::{load_beats, load_csv, read_beat_rows, write_csv, CsvSchema, GapPolicy};
pub use gasf::{gasf, rescale_unit};
pub use normalize::{Direction, Normalizer};
pub use split::{split, validate_ratios, Split, SplitMode};
pub use synth::{synth_beats, synth_ett, synth_multimodal, SynthTask};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Time-ordered multichannel series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesDataset {
    pub name: String,
    pub channels: Vec<String>,
    /// Seconds since the epoch, or the raw value for numeric timestamps.
    pub timestamps: Vec<i64>,
    pub rows: Vec<Vec<f64>>,
    /// Optional per-row class label.
    pub labels: Option<Vec<usize>>,
    /// Cells filled by forward-fill during ingestion.
    pub filled_cells: usize,
}

impl SeriesDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::config(format!("unknown channel `{name}`")))
    }

    pub fn column(&self, channel: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[channel]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Horizon(Vec<f64>),
}

/// One multi-modal example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `C × L` window.
    pub series: Tensor,
    /// `C' × H × W` image.
    pub image: Tensor,
    pub target: Target,
    /// Ordinal position in the source (window start row for series data).
    pub position: usize,
}

impl Sample {
    /// Builds a sample whose image is the GASF of `image_channel` of the window.
    pub fn from_window(series: Tensor, image_channel: usize, target: Target, position: usize) -> Result<Self> {
        series.expect_rank(2, "sample window")?;
        let l = series.shape()[1];
        let row = &series.data()[image_channel * l..(image_channel + 1) * l];
        let img = gasf(row);
        let image = img.reshape(&[1, l, l])?;
        Ok(Self {
            series,
            image,
            target,
            position,
        })
    }

    pub fn label(&self) -> Option<usize> {
        match self.target {
            Target::Class(c) => Some(c),
            Target::Horizon(_) => None,
        }
    }
}

/// What a window's target is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowTarget {
    /// Next `horizon` values of this channel.
    Forecast { channel: usize },
    /// Label of the last row of the lookback window.
    Label,
}

/// Number of windows [`window`] yields.
pub fn window_count(rows: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if rows < lookback + horizon || stride == 0 {
        0
    } else {
        (rows - lookback - horizon) / stride + 1
    }
}

/// Sliding windows of `lookback` rows with a `horizon`-row target.
pub fn window(
    ds: &SeriesDataset,
    lookback: usize,
    horizon: usize,
    stride: usize,
    target: WindowTarget,
    image_channel: usize,
) -> Result<Vec<Sample>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::config("lookback, horizon and stride must all be at least 1"));
    }
    if ds.len() < lookback + horizon {
        return Err(Error::Data(format!(
            "{} rows cannot hold a window of {lookback} + {horizon}",
            ds.len()
        )));
    }
    if image_channel >= ds.channels.len() {
        return Err(Error::config("image channel out of range"));
    }
    let labels = match target {
        WindowTarget::Label => Some(
            ds.labels
                .as_ref()
                .ok_or_else(|| Error::Data("dataset has no label column".into()))?,
        ),
        WindowTarget::Forecast { channel } => {
            if channel >= ds.channels.len() {
                return Err(Error::config("target channel out of range"));
            }
            None
        }
    };
    let n = window_count(ds.len(), lookback, horizon, stride);
    let c = ds.channels.len();
    (0..n)
        .map(|i| {
            let start = i * stride;
            let mut data = vec![0.0; c * lookback];
            for (t, row) in ds.rows[start..start + lookback].iter().enumerate() {
                for (ch, &v) in row.iter().enumerate() {
                    data[ch * lookback + t] = v;
                }
            }
            let tgt = match (target, labels) {
                (WindowTarget::Forecast { channel }, _) => Target::Horizon(
                    ds.rows[start + lookback..start + lookback + horizon]
                        .iter()
                        .map(|r| r[channel])
                        .collect(),
                ),
                (WindowTarget::Label, Some(l)) => Target::Class(l[start + lookback - 1]),
                (WindowTarget::Label, None) => unreachable!(),
            };
            Sample::from_window(Tensor::new(vec![c, lookback], data)?, image_channel, tgt, start)
        })
        .collect()
}

/// Lookback-only windows for inference; each carries an empty horizon target.
pub fn window_inputs(ds: &SeriesDataset, lookback: usize, stride: usize, image_channel: usize) -> Result<Vec<Sample>> {
    if lookback == 0 || stride == 0 {
        return Err(Error::config("lookback and stride must be at least 1"));
    }
    if ds.len() < lookback {
        return Err(Error::Data(format!(
            "{} rows cannot hold a lookback window of {lookback}",
            ds.len()
        )));
    }
    let n = (ds.len() - lookback) / stride + 1;
    let c = ds.channels.len();
    (0..n)
        .map(|i| {
            let start = i * stride;
            let mut data = vec![0.0; c * lookback];
            for (t, row) in ds.rows[start..start + lookback].iter().enumerate() {
                for (ch, &v) in row.iter().enumerate() {
                    data[ch * lookback + t] = v;
                }
            }
            Sample::from_window(Tensor::new(vec![c, lookback], data)?, image_channel, Target::Horizon(Vec::new()), start)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ramp(rows: usize) -> SeriesDataset {
        SeriesDataset {
            name: "ramp".into(),
            channels: vec!["a".into(), "b".into()],
            timestamps: (0..rows as i64).collect(),
            rows: (0..rows).map(|i| vec![i as f64, -(i as f64)]).collect(),
            labels: Some((0..rows).map(|i| i % 3).collect()),
            filled_cells: 0,
        }
    }

    #[test]
    fn window_count_examples() {
        let ds = ramp(10);
        let w = window(&ds, 4, 2, 1, WindowTarget::Forecast { channel: 0 }, 0).unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(window(&ramp(6), 4, 2, 1, WindowTarget::Forecast { channel: 0 }, 0).unwrap().len(), 1);
        assert_eq!(window(&ds, 4, 2, 10, WindowTarget::Forecast { channel: 0 }, 0).unwrap().len(), 1);
        assert!(window(&ramp(5), 4, 2, 1, WindowTarget::Forecast { channel: 0 }, 0).is_err());
    }

    #[test]
    fn window_count_matches_enumeration() {
        for rows in 0..30 {
            for l in 1..6 {
                for h in 1..5 {
                    for stride in 1..7 {
                        let brute = (0..rows).filter(|s| s % stride == 0 && s + l + h <= rows).count();
                        assert_eq!(window_count(rows, l, h, stride), brute, "{rows} {l} {h} {stride}");
                    }
                }
            }
        }
    }

    #[test]
    fn window_contents() {
        let ds = ramp(10);
        let w = window(&ds, 4, 2, 3, WindowTarget::Forecast { channel: 1 }, 0).unwrap();
        let s = &w[1];
        assert_eq!(s.position, 3);
        assert_eq!(s.series.shape(), &[2, 4]);
        assert_eq!(&s.series.data()[..4], &[3.0, 4.0, 5.0, 6.0]);
        assert_eq!(s.target, Target::Horizon(vec![-7.0, -8.0]));
        assert_eq!(s.image.shape(), &[1, 4, 4]);

        let w = window(&ds, 4, 1, 1, WindowTarget::Label, 0).unwrap();
        assert_eq!(w[0].target, Target::Class(3 % 3));
        assert_eq!(w[1].target, Target::Class(4 % 3));
    }

    #[test]
    fn inference_windows() {
        let w = window_inputs(&ramp(10), 4, 1, 0).unwrap();
        assert_eq!(w.len(), 7);
    }
}
