//! Single-modality pulse encoders.
//!
//! Static inputs are presented as a constant current at every step. Each
//! stage is a feature map (convolution and pooling for images, a pointwise
//! channel mapping for series) followed by a LIF layer, and the spikes of one
//! stage drive the next.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lif::{lif_step_on_tape, LifParams, LifState, SpikeLayout, SpikeTensor};
use crate::numerics::ops::window_extent;
use crate::numerics::{Tape, Tensor, Var};
use crate::param::{uniform, Parameterized};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEncoderConfig {
    /// Output channels of each FM stage; the stage count is its length.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_window: usize,
    pub lif: LifParams,
}

impl Default for ImageEncoderConfig {
    fn default() -> Self {
        Self {
            channels: vec![16, 32],
            kernel_size: 3,
            pool_window: 2,
            lif: LifParams::default(),
        }
    }
}

impl ImageEncoderConfig {
    /// Output `(channels, height, width)` for an input of the given extent.
    pub fn output_extent(&self, in_h: usize, in_w: usize) -> Result<(usize, usize, usize)> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::config("image encoder needs at least one stage with nonzero channels"));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::config("image kernel_size must be odd"));
        }
        if self.pool_window == 0 {
            return Err(Error::config("pool_window must be positive"));
        }
        let pad = self.kernel_size / 2;
        let (mut h, mut w) = (in_h, in_w);
        for (stage, _) in self.channels.iter().enumerate() {
            h = window_extent(h, self.kernel_size, 1, pad).map_err(|e| Error::config(e.to_string()))?;
            w = window_extent(w, self.kernel_size, 1, pad).map_err(|e| Error::config(e.to_string()))?;
            if h < self.pool_window || w < self.pool_window {
                return Err(Error::config(format!(
                    "image encoder stage {stage} collapses {h}x{w} below pool window {}",
                    self.pool_window
                )));
            }
            h /= self.pool_window;
            w /= self.pool_window;
        }
        Ok((*self.channels.last().unwrap(), h, w))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesEncoderConfig {
    /// Width of each mapping layer; the stage count is its length.
    pub hidden: Vec<usize>,
    /// Project previous-step spikes back into the drive of each stage.
    pub feedback: bool,
    pub lif: LifParams,
}

impl Default for SeriesEncoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            feedback: true,
            lif: LifParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ConvStage {
    weight: Tensor,
    bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageEncoder {
    cfg: ImageEncoderConfig,
    input: (usize, usize, usize),
    output: (usize, usize, usize),
    stages: Vec<ConvStage>,
}

impl ImageEncoder {
    pub fn new(cfg: ImageEncoderConfig, in_c: usize, in_h: usize, in_w: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.lif.validate()?;
        if in_c == 0 {
            return Err(Error::config("image encoder needs at least one input channel"));
        }
        let output = cfg.output_extent(in_h, in_w)?;
        let k = cfg.kernel_size;
        let mut c_prev = in_c;
        let stages = cfg
            .channels
            .iter()
            .map(|&c| {
                let fan_in = c_prev * k * k;
                let bound = (6.0 / fan_in as f64).sqrt();
                let stage = ConvStage {
                    weight: uniform(rng, &[c, c_prev, k, k], bound),
                    bias: Tensor::zeros(&[c]),
                };
                c_prev = c;
                stage
            })
            .collect();
        Ok(Self {
            cfg,
            input: (in_c, in_h, in_w),
            output,
            stages,
        })
    }

    pub fn config(&self) -> &ImageEncoderConfig {
        &self.cfg
    }

    /// Per-sample `(C', H', W')` of the emitted spikes.
    pub fn output_extent(&self) -> (usize, usize, usize) {
        self.output
    }

    pub fn feature_width(&self) -> usize {
        self.output.0 * self.output.1 * self.output.2
    }

    /// Records the encoder on `tape`; `params` comes from [`Parameterized::bind`].
    /// Returns the final stage's spikes, one `B×C'×H'×W'` var per step.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], images: Var, steps: usize) -> Result<Vec<Var>> {
        if steps == 0 {
            return Err(Error::config("encoder needs at least one time step"));
        }
        let shape = tape.value(images).shape().to_vec();
        let (c, h, w) = self.input;
        if shape.len() != 4 || shape[1..] != [c, h, w] {
            return Err(Error::shape(format!(
                "image encoder expects B×{c}×{h}×{w}, got {shape:?}"
            )));
        }
        let pad = self.cfg.kernel_size / 2;
        let pool = self.cfg.pool_window;
        let lif = &self.cfg.lif;
        let mut constant_input = Some(images);
        let mut spikes: Vec<Var> = Vec::new();
        for (s, _) in self.stages.iter().enumerate() {
            let (wv, bv) = (params[2 * s], params[2 * s + 1]);
            let currents: Vec<Var> = match constant_input.take() {
                Some(x) => {
                    let conv = tape.conv2d(x, wv, Some(bv), 1, pad)?;
                    let pooled = tape.avg_pool2d(conv, pool, pool)?;
                    vec![pooled; steps]
                }
                None => spikes
                    .iter()
                    .map(|&x| {
                        let conv = tape.conv2d(x, wv, Some(bv), 1, pad)?;
                        tape.avg_pool2d(conv, pool, pool)
                    })
                    .collect::<Result<_>>()?,
            };
            let rest = LifState::at_rest(tape.value(currents[0]).shape(), lif);
            let mut v = tape.constant(rest.v);
            spikes = Vec::with_capacity(steps);
            for &i in &currents {
                let (next, s) = lif_step_on_tape(tape, v, i, lif)?;
                v = next;
                spikes.push(s);
            }
        }
        Ok(spikes)
    }

    /// Spike train `T × B × C' × H' × W'` for a batch of images.
    pub fn encode(&self, images: &Tensor, steps: usize) -> Result<SpikeTensor> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params().into_iter().map(|(_, t)| tape.constant(t.clone())).collect();
        let x = tape.constant(images.clone());
        let out = self.forward(&mut tape, &params, x, steps)?;
        let steps: Vec<&Tensor> = out.iter().map(|&v| tape.value(v)).collect();
        SpikeTensor::from_steps(&steps, SpikeLayout::Image)
    }
}

impl Parameterized for ImageEncoder {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.stages
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                [
                    (format!("image.stage{i}.weight"), &s.weight),
                    (format!("image.stage{i}.bias"), &s.bias),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.stages
            .iter_mut()
            .flat_map(|s| [&mut s.weight, &mut s.bias])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct MapStage {
    weight: Tensor,
    bias: Tensor,
    feedback: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesEncoder {
    cfg: SeriesEncoderConfig,
    input: (usize, usize),
    stages: Vec<MapStage>,
}

impl SeriesEncoder {
    pub fn new(cfg: SeriesEncoderConfig, in_c: usize, len: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.lif.validate()?;
        if cfg.hidden.is_empty() || cfg.hidden.contains(&0) {
            return Err(Error::config("series encoder needs at least one stage with nonzero width"));
        }
        if in_c == 0 || len == 0 {
            return Err(Error::config("series encoder needs a non-empty input"));
        }
        let mut c_prev = in_c;
        let stages = cfg
            .hidden
            .iter()
            .map(|&hdim| {
                let bound = (6.0 / c_prev as f64).sqrt();
                let fb_bound = 0.5 * (3.0 / hdim as f64).sqrt();
                let stage = MapStage {
                    weight: uniform(rng, &[hdim, c_prev, 1, 1], bound),
                    bias: Tensor::zeros(&[hdim]),
                    feedback: uniform(rng, &[hdim, hdim, 1, 1], fb_bound),
                };
                c_prev = hdim;
                stage
            })
            .collect();
        Ok(Self {
            cfg,
            input: (in_c, len),
            stages,
        })
    }

    pub fn config(&self) -> &SeriesEncoderConfig {
        &self.cfg
    }

    /// Per-sample `(C', L')` of the emitted spikes.
    pub fn output_extent(&self) -> (usize, usize) {
        (*self.cfg.hidden.last().unwrap(), self.input.1)
    }

    pub fn feature_width(&self) -> usize {
        let (c, l) = self.output_extent();
        c * l
    }

    /// Zeroes every feedback projection.
    pub fn zero_feedback(&mut self) {
        for s in &mut self.stages {
            s.feedback = Tensor::zeros(s.feedback.shape());
        }
    }

    /// Records the encoder on `tape`. `series` is `B×C×1×L`; returns one
    /// `B×C'×1×L` spike var per step.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], series: Var, steps: usize) -> Result<Vec<Var>> {
        if steps == 0 {
            return Err(Error::config("encoder needs at least one time step"));
        }
        let shape = tape.value(series).shape().to_vec();
        let (c, l) = self.input;
        if shape.len() != 4 || shape[1..] != [c, 1, l] {
            return Err(Error::shape(format!(
                "series encoder expects B×{c}×1×{l}, got {shape:?}"
            )));
        }
        let lif = &self.cfg.lif;
        let mut constant_input = Some(series);
        let mut spikes: Vec<Var> = Vec::new();
        for (s, _) in self.stages.iter().enumerate() {
            let (wv, bv, fv) = (params[3 * s], params[3 * s + 1], params[3 * s + 2]);
            let drives: Vec<Var> = match constant_input.take() {
                Some(x) => vec![tape.conv2d(x, wv, Some(bv), 1, 0)?; steps],
                None => spikes
                    .iter()
                    .map(|&x| tape.conv2d(x, wv, Some(bv), 1, 0))
                    .collect::<Result<_>>()?,
            };
            let rest = LifState::at_rest(tape.value(drives[0]).shape(), lif);
            let mut v = tape.constant(rest.v);
            let mut out: Vec<Var> = Vec::with_capacity(steps);
            for (t, &drive) in drives.iter().enumerate() {
                let current = if self.cfg.feedback && t > 0 {
                    let fb = tape.conv2d(out[t - 1], fv, None, 1, 0)?;
                    tape.add(drive, fb)?
                } else {
                    drive
                };
                let (next, spk) = lif_step_on_tape(tape, v, current, lif)?;
                v = next;
                out.push(spk);
            }
            spikes = out;
        }
        Ok(spikes)
    }

    /// Spike train `T × B × C' × L'` for a batch of `B×C×L` series.
    pub fn encode(&self, series: &Tensor, steps: usize) -> Result<SpikeTensor> {
        series.expect_rank(3, "series batch")?;
        let s = series.shape();
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params().into_iter().map(|(_, t)| tape.constant(t.clone())).collect();
        let x = tape.constant(series.reshape(&[s[0], s[1], 1, s[2]])?);
        let out = self.forward(&mut tape, &params, x, steps)?;
        let (c, l) = self.output_extent();
        let flat: Vec<Tensor> = out
            .iter()
            .map(|&v| tape.value(v).reshape(&[s[0], c, l]))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = flat.iter().collect();
        SpikeTensor::from_steps(&refs, SpikeLayout::Series)
    }
}

impl Parameterized for SeriesEncoder {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.stages
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                [
                    (format!("series.stage{i}.weight"), &s.weight),
                    (format!("series.stage{i}.bias"), &s.bias),
                    (format!("series.stage{i}.feedback"), &s.feedback),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.stages
            .iter_mut()
            .flat_map(|s| [&mut s.weight, &mut s.bias, &mut s.feedback])
            .collect()
    }
}
