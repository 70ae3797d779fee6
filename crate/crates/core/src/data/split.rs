use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Contiguous blocks in input order.
    Chronological,
    /// Seeded shuffle within each class.
    Stratified,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn sizes(n: usize, ratios: [f64; 3]) -> (usize, usize) {
    let train = ((n as f64) * ratios[0]).round() as usize;
    let train = train.min(n);
    let val = (((n as f64) * ratios[1]).round() as usize).min(n - train);
    (train, val)
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::config("split ratios must be non-negative"));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios sum to {total}, expected 1")));
    }
    Ok(())
}

/// Partitions samples into train/val/test.
///
/// Stratified mode groups by class label; samples without labels form one group.
pub fn split(samples: Vec<Sample>, ratios: [f64; 3], seed: u64, mode: SplitMode) -> Result<Split> {
    validate_ratios(ratios)?;
    match mode {
        SplitMode::Chronological => {
            let (a, b) = sizes(samples.len(), ratios);
            let mut it = samples.into_iter();
            let train = it.by_ref().take(a).collect();
            let val = it.by_ref().take(b).collect();
            Ok(Split {
                train,
                val,
                test: it.collect(),
            })
        }
        SplitMode::Stratified => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut groups: BTreeMap<Option<usize>, Vec<Sample>> = BTreeMap::new();
            for s in samples {
                groups.entry(s.label()).or_default().push(s);
            }
            let mut out = Split::default();
            for (_, mut g) in groups {
                g.shuffle(&mut rng);
                let (a, b) = sizes(g.len(), ratios);
                let mut it = g.into_iter();
                out.train.extend(it.by_ref().take(a));
                out.val.extend(it.by_ref().take(b));
                out.test.extend(it);
            }
            out.train.shuffle(&mut rng);
            out.val.shuffle(&mut rng);
            out.test.shuffle(&mut rng);
            Ok(out)
        }
    }
}
