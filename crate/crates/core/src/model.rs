//! End-to-end network: optional wavelet preprocessing, both spiking
//! encoders, joint-space fusion and the output head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Sample, Target};
use crate::encoders::{ImageEncoder, ImageEncoderConfig, SeriesEncoder, SeriesEncoderConfig};
use crate::error::{Error, Result};
use crate::fusion::{FusionVars, JointModule, JointSpaceConfig, OutputHead, SigmaMode, Task};
use crate::lif::{SpikeLayout, SpikeTensor};
use crate::numerics::{Tape, Tensor, Var};
use crate::param::Parameterized;
use crate::wavelet::{haar_dwt2d_padded, pad_edge_1d, subband_stack, wavelet_packet1d};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Decompose both modalities into wavelet subbands before encoding.
    pub wavelet: bool,
    /// Number of SNN time steps `T`.
    pub steps: usize,
    pub image: ImageEncoderConfig,
    pub series: SeriesEncoderConfig,
    pub joint: JointSpaceConfig,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            wavelet: true,
            steps: 8,
            image: ImageEncoderConfig::default(),
            series: SeriesEncoderConfig::default(),
            joint: JointSpaceConfig::default(),
            head_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.head_hidden == 0 {
            return Err(Error::config("head_hidden must be at least 1"));
        }
        self.image.lif.validate()?;
        self.series.lif.validate()?;
        self.joint.validate()
    }
}

/// Raw per-sample shapes before preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub series_channels: usize,
    pub series_len: usize,
    pub image_channels: usize,
    pub image_h: usize,
    pub image_w: usize,
}

impl InputShape {
    pub fn of(sample: &Sample) -> Result<Self> {
        let s = sample.series.shape();
        let i = sample.image.shape();
        if s.len() != 2 || i.len() != 3 {
            return Err(Error::shape("sample needs a C×L series and a C×H×W image"));
        }
        Ok(Self {
            series_channels: s[0],
            series_len: s[1],
            image_channels: i[0],
            image_h: i[1],
            image_w: i[2],
        })
    }

    /// `(C, L)` of the series as seen by the encoder.
    fn encoded_series(&self, wavelet: bool) -> (usize, usize) {
        if wavelet {
            (4 * self.series_channels, self.series_len.div_ceil(4))
        } else {
            (self.series_channels, self.series_len)
        }
    }

    /// `(C, H, W)` of the image as seen by the encoder.
    fn encoded_image(&self, wavelet: bool) -> (usize, usize, usize) {
        if wavelet {
            (4 * self.image_channels, self.image_h.div_ceil(2), self.image_w.div_ceil(2))
        } else {
            (self.image_channels, self.image_h, self.image_w)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchTargets {
    Classes(Vec<usize>),
    /// `B × H`.
    Horizons(Tensor),
    None,
}

/// Preprocessed encoder inputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `B × C × H × W`.
    pub images: Tensor,
    /// `B × C × 1 × L`.
    pub series: Tensor,
    pub targets: BatchTargets,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.images.shape()[0]
    }
}

/// Tape handles for one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub image_spikes: Vec<Var>,
    pub series_spikes: Vec<Var>,
    pub fusion: FusionVars,
    /// `B × out`.
    pub output: Var,
}

/// Spike trains and fused activations of one evaluation pass.
#[derive(Clone, Debug)]
pub struct Activations {
    /// `T × B × C' × H' × W'`.
    pub image: SpikeTensor,
    /// `T × B × C' × L'`.
    pub series: SpikeTensor,
    /// `N × B × D_j`.
    pub fused: Tensor,
    /// `B × out`.
    pub output: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    cfg: ModelConfig,
    input: InputShape,
    pub image: ImageEncoder,
    pub series: SeriesEncoder,
    pub joint: JointModule,
    pub head: OutputHead,
}

impl Model {
    pub fn new(cfg: ModelConfig, task: Task, input: InputShape, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let (ic, ih, iw) = input.encoded_image(cfg.wavelet);
        let (sc, sl) = input.encoded_series(cfg.wavelet);
        let image = ImageEncoder::new(cfg.image.clone(), ic, ih, iw, rng)?;
        let series = SeriesEncoder::new(cfg.series.clone(), sc, sl, rng)?;
        let joint = JointModule::new(cfg.joint.clone(), image.feature_width(), series.feature_width(), rng)?;
        let head = OutputHead::new(Some(task), cfg.joint.joint_width, cfg.head_hidden, rng)?;
        Ok(Self {
            cfg,
            input,
            image,
            series,
            joint,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn task(&self) -> Task {
        self.head.task()
    }

    /// Stacks samples and applies the wavelet preprocessing if enabled.
    pub fn prepare(&self, samples: &[&Sample]) -> Result<Batch> {
        if samples.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        for s in samples {
            if InputShape::of(s)? != self.input {
                return Err(Error::shape(format!(
                    "sample shapes {:?}/{:?} do not match the model input {:?}",
                    s.series.shape(),
                    s.image.shape(),
                    self.input
                )));
            }
        }
        let series: Vec<&Tensor> = samples.iter().map(|s| &s.series).collect();
        let images: Vec<&Tensor> = samples.iter().map(|s| &s.image).collect();
        let mut series = Tensor::stack(&series)?;
        let mut images = Tensor::stack(&images)?;
        if self.cfg.wavelet {
            series = subband_stack(&wavelet_packet1d(&pad_edge_1d(&series, 4)?)?);
            images = subband_stack(&haar_dwt2d_padded(&images)?);
        }
        let s = series.shape().to_vec();
        let series = series.reshape(&[s[0], s[1], 1, s[2]])?;
        Ok(Batch {
            images,
            series,
            targets: self.targets(samples)?,
        })
    }

    fn targets(&self, samples: &[&Sample]) -> Result<BatchTargets> {
        match self.task() {
            Task::Classification { classes } => {
                let mut labels = Vec::with_capacity(samples.len());
                for s in samples {
                    match s.target {
                        Target::Class(c) if c < classes => labels.push(c),
                        Target::Class(c) => {
                            return Err(Error::Data(format!("label {c} outside 0..{classes}")))
                        }
                        Target::Horizon(_) => return Ok(BatchTargets::None),
                    }
                }
                Ok(BatchTargets::Classes(labels))
            }
            Task::Regression { horizon } => {
                let mut data = Vec::with_capacity(samples.len() * horizon);
                for s in samples {
                    match &s.target {
                        Target::Horizon(h) if h.len() == horizon => data.extend_from_slice(h),
                        Target::Horizon(h) if h.is_empty() => return Ok(BatchTargets::None),
                        Target::Horizon(h) => {
                            return Err(Error::Data(format!(
                                "target horizon {} does not match the model horizon {horizon}",
                                h.len()
                            )))
                        }
                        Target::Class(_) => return Err(Error::Data("class target for a regression model".into())),
                    }
                }
                Ok(BatchTargets::Horizons(Tensor::new(vec![samples.len(), horizon], data)?))
            }
        }
    }

    fn split_params<'a>(&self, params: &'a [Var]) -> [&'a [Var]; 4] {
        let a = self.image.params().len();
        let b = a + self.series.params().len();
        let c = b + self.joint.params().len();
        [&params[..a], &params[a..b], &params[b..c], &params[c..]]
    }

    /// Records a full forward pass; `params` comes from [`Parameterized::bind`].
    /// The similarity variance is adapted to `batch`.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], batch: &Batch) -> Result<ForwardVars> {
        let [pi, ps, pj, ph] = self.split_params(params);
        let steps = self.cfg.steps;
        let images = tape.constant(batch.images.clone());
        let series = tape.constant(batch.series.clone());
        let image_spikes = self.image.forward(tape, pi, images, steps)?;
        let series_spikes = self.series.forward(tape, ps, series, steps)?;
        let fusion = self.joint.forward(tape, pj, &image_spikes, &series_spikes, SigmaMode::Batch)?;
        let output = self.head.forward(tape, ph, fusion.j_fusion)?;
        Ok(ForwardVars {
            image_spikes,
            series_spikes,
            fusion,
            output,
        })
    }

    fn eval_tape(&self, batch: &Batch) -> Result<(Tape, ForwardVars)> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params().into_iter().map(|(_, t)| tape.constant(t.clone())).collect();
        let vars = self.forward(&mut tape, &params, batch)?;
        Ok((tape, vars))
    }

    /// Head output `B × out` without recording gradients.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let (tape, vars) = self.eval_tape(batch)?;
        Ok(tape.value(vars.output).clone())
    }

    pub fn activations(&self, batch: &Batch) -> Result<Activations> {
        let (tape, vars) = self.eval_tape(batch)?;
        let image: Vec<&Tensor> = vars.image_spikes.iter().map(|&v| tape.value(v)).collect();
        let series = vars
            .series_spikes
            .iter()
            .map(|&v| {
                let t = tape.value(v);
                let s = t.shape();
                t.reshape(&[s[0], s[1], s[3]])
            })
            .collect::<Result<Vec<_>>>()?;
        let series: Vec<&Tensor> = series.iter().collect();
        Ok(Activations {
            image: SpikeTensor::from_steps(&image, SpikeLayout::Image)?,
            series: SpikeTensor::from_steps(&series, SpikeLayout::Series)?,
            fused: tape.value(vars.fusion.j_fusion).clone(),
            output: tape.value(vars.output).clone(),
        })
    }
}

impl Parameterized for Model {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut p = self.image.params();
        p.extend(self.series.params());
        p.extend(self.joint.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.image.params_mut();
        p.extend(self.series.params_mut());
        p.extend(self.joint.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}
