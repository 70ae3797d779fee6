//! Multi-modal pulse joint learning.
//!
//! Both spike trains are moved to the frequency domain along the time axis,
//! projected into a shared joint space, compared by a Gaussian similarity, and
//! mixed with per-sample modality weights. Tensors in the joint space are laid
//! out `N × B × D`, where `N` is the number of frequency bins.
//!
//! The per-modality similarity compares each modality's projection with the
//! aligned joint representation; the two scores are turned into weights by a
//! two-way softmax.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lif::SpikeTensor;
use crate::numerics::{softmax, Tape, Tensor, Var};
use crate::param::{Affine, Parameterized};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpaceConfig {
    /// Width `D_j` of the joint space.
    pub joint_width: usize,
    /// Lower bound on the similarity variance.
    pub sigma_floor: f64,
}

impl Default for JointSpaceConfig {
    fn default() -> Self {
        Self {
            joint_width: 32,
            sigma_floor: 1e-6,
        }
    }
}

impl JointSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.joint_width == 0 {
            return Err(Error::config("joint_width must be at least 1"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::config("sigma_floor must be positive"));
        }
        Ok(())
    }
}

const PSI_BIAS_INIT: f64 = 0.1;

/// ψ maps for both modalities.
#[derive(Clone, Debug, PartialEq)]
pub struct JointModule {
    cfg: JointSpaceConfig,
    pub psi_image: Affine,
    pub psi_series: Affine,
}

/// How the similarity variance is chosen for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaMode {
    /// Adapt to the current batch.
    Batch,
    /// Use the given value.
    Fixed(f64),
}

/// Tape handles for every intermediate of one fusion pass.
#[derive(Clone, Debug)]
pub struct FusionVars {
    pub freq_image: Var,
    pub freq_series: Var,
    pub s_image: Var,
    pub s_series: Var,
    pub j_align: Var,
    /// `B × 2` similarity scores (image, series).
    pub sims: Var,
    /// `B × 2` modality weights.
    pub p_mtsa: Var,
    pub j_fusion: Var,
    pub sigma2: f64,
}

impl JointModule {
    pub fn new(cfg: JointSpaceConfig, image_features: usize, series_features: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.joint_width;
        // a silent modality has all-zero features; a positive bias keeps its
        // relu open so gradient still reaches the encoder
        let mut psi_image = Affine::glorot(rng, 2 * image_features, d);
        let mut psi_series = Affine::glorot(rng, 2 * series_features, d);
        psi_image.bias = Tensor::full(&[d], PSI_BIAS_INIT);
        psi_series.bias = Tensor::full(&[d], PSI_BIAS_INIT);
        Ok(Self {
            psi_image,
            psi_series,
            cfg,
        })
    }

    pub fn config(&self) -> &JointSpaceConfig {
        &self.cfg
    }

    /// Records fourier alignment, projection, weighting and fusion.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        image_spikes: &[Var],
        series_spikes: &[Var],
        sigma: SigmaMode,
    ) -> Result<FusionVars> {
        let freq_image = tape.spectral(image_spikes)?;
        let freq_series = tape.spectral(series_spikes)?;
        let (s_image, s_series, j_align) =
            project_on_tape(tape, &params[..4], freq_image, freq_series)?;
        let sigma2 = match sigma {
            SigmaMode::Batch => {
                let mut diffs = joint_diffs(tape.value(s_image), tape.value(j_align))?;
                diffs.extend(joint_diffs(tape.value(s_series), tape.value(j_align))?);
                adapt_sigma(&diffs, self.cfg.sigma_floor)
            }
            SigmaMode::Fixed(v) => v.max(self.cfg.sigma_floor),
        };
        let (sims, p_mtsa) = weights_on_tape(tape, s_image, s_series, j_align, sigma2)?;
        let j_fusion = fuse_on_tape(tape, s_image, s_series, j_align, p_mtsa)?;
        Ok(FusionVars {
            freq_image,
            freq_series,
            s_image,
            s_series,
            j_align,
            sims,
            p_mtsa,
            j_fusion,
            sigma2,
        })
    }
}

impl Parameterized for JointModule {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("joint.psi_image.weight".into(), &self.psi_image.weight),
            ("joint.psi_image.bias".into(), &self.psi_image.bias),
            ("joint.psi_series.weight".into(), &self.psi_series.weight),
            ("joint.psi_series.bias".into(), &self.psi_series.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.psi_image.weight,
            &mut self.psi_image.bias,
            &mut self.psi_series.weight,
            &mut self.psi_series.bias,
        ]
    }
}

fn joint_diffs(a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    Ok(a.zip_map(b, |x, y| x - y)?.into_data())
}

fn project_on_tape(tape: &mut Tape, p: &[Var], freq_image: Var, freq_series: Var) -> Result<(Var, Var, Var)> {
    let li = tape.linear(freq_image, p[0], Some(p[1]))?;
    let s_image = tape.relu(li);
    let ls = tape.linear(freq_series, p[2], Some(p[3]))?;
    let s_series = tape.relu(ls);
    let j_align = tape.add(s_image, s_series)?;
    Ok((s_image, s_series, j_align))
}

fn weights_on_tape(tape: &mut Tape, s_image: Var, s_series: Var, j_align: Var, sigma2: f64) -> Result<(Var, Var)> {
    let factor = -1.0 / (2.0 * sigma2);
    let di = tape.mean_sq_diff(s_image, j_align)?;
    let sim_i = tape.exp_scaled(di, factor);
    let dt = tape.mean_sq_diff(s_series, j_align)?;
    let sim_t = tape.exp_scaled(dt, factor);
    let sims = tape.stack_last(&[sim_i, sim_t])?;
    let p = tape.softmax(sims, 1)?;
    Ok((sims, p))
}

fn fuse_on_tape(tape: &mut Tape, s_image: Var, s_series: Var, j_align: Var, p_mtsa: Var) -> Result<Var> {
    let d = tape.value(j_align).last_dim();
    let inv_sqrt = 1.0 / (d as f64).sqrt();
    let mut parts = [s_image, s_series].into_iter().enumerate().map(|(m, s)| {
        let prod = tape.mul(s, j_align)?;
        let scaled = tape.scale(prod, inv_sqrt);
        let score = tape.softmax(scaled, 2)?;
        let fused = tape.mul(score, j_align)?;
        tape.scale_rows(fused, p_mtsa, m)
    });
    let first = parts.next().unwrap()?;
    let second = parts.next().unwrap()?;
    drop(parts);
    tape.add(first, second)
}

/// Frequency features of a spike train: FFT along time, real and imaginary
/// parts concatenated per bin, spatial axes flattened. Output is `N × B × 2F`.
pub fn fourier_align(spikes: &SpikeTensor) -> Result<Tensor> {
    let t = spikes.time_steps();
    let step_shape = spikes.shape()[1..].to_vec();
    let mut tape = Tape::new();
    let steps: Vec<Var> = (0..t)
        .map(|k| tape.constant(Tensor::from_parts(step_shape.clone(), spikes.step(k).to_vec())))
        .collect();
    let out = tape.spectral(&steps)?;
    Ok(tape.value(out).clone())
}

/// Joint-space projections of both modalities.
#[derive(Clone, Debug, PartialEq)]
pub struct JointProjection {
    pub s_image: Tensor,
    pub s_series: Tensor,
    pub j_align: Tensor,
}

pub fn joint_project(freq_image: &Tensor, freq_series: &Tensor, module: &JointModule) -> Result<JointProjection> {
    let mut tape = Tape::new();
    let params: Vec<Var> = module.params().into_iter().map(|(_, t)| tape.constant(t.clone())).collect();
    let fi = tape.constant(freq_image.clone());
    let fs = tape.constant(freq_series.clone());
    let (si, ss, ja) = project_on_tape(&mut tape, &params, fi, fs)?;
    Ok(JointProjection {
        s_image: tape.value(si).clone(),
        s_series: tape.value(ss).clone(),
        j_align: tape.value(ja).clone(),
    })
}

/// Gaussian similarity `exp(-d² / 2σ²)` with `d²` the mean squared difference.
pub fn similarity(a: &Tensor, b: &Tensor, sigma2: f64) -> Result<f64> {
    a.expect_same_shape(b)?;
    if a.is_empty() {
        return Err(Error::shape("similarity of empty tensors"));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::config("similarity variance must be positive"));
    }
    let msd = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok((-msd / (2.0 * sigma2)).exp())
}

/// Two-way softmax over the modality similarity scores.
pub fn jwam_weights(sim_image: f64, sim_series: f64) -> (f64, f64) {
    let p = softmax(&Tensor::from_vec(vec![sim_image, sim_series]), 0).expect("rank-1 softmax");
    (p.data()[0], p.data()[1])
}

/// Population variance of `diffs`, floored at `floor` (0 samples → floor).
pub fn adapt_sigma(diffs: &[f64], floor: f64) -> f64 {
    if diffs.is_empty() {
        return floor;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    var.max(floor)
}

/// Fusion of the two joint-space projections under weights `p_mtsa` (`B × 2`).
pub fn fuse(s_image: &Tensor, s_series: &Tensor, j_align: &Tensor, p_mtsa: &Tensor) -> Result<Tensor> {
    j_align.expect_rank(3, "j_align")?;
    s_image.expect_same_shape(j_align)?;
    s_series.expect_same_shape(j_align)?;
    let mut tape = Tape::new();
    let si = tape.constant(s_image.clone());
    let ss = tape.constant(s_series.clone());
    let ja = tape.constant(j_align.clone());
    let p = tape.constant(p_mtsa.clone());
    let out = fuse_on_tape(&mut tape, si, ss, ja, p)?;
    Ok(tape.value(out).clone())
}

/// Downstream task served by the output head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification { classes: usize },
    Regression { horizon: usize },
}

impl Task {
    pub fn output_width(&self) -> usize {
        match *self {
            Task::Classification { classes } => classes,
            Task::Regression { horizon } => horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Task::Classification { classes } if classes < 2 => {
                Err(Error::config("classification needs at least 2 classes"))
            }
            Task::Regression { horizon: 0 } => Err(Error::config("regression horizon must be positive")),
            _ => Ok(()),
        }
    }
}

/// Output layer: `proj(x) + inner2(relu(inner1(x)))`, averaged over bins.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputHead {
    task: Task,
    pub proj: Affine,
    pub inner1: Affine,
    pub inner2: Affine,
}

impl OutputHead {
    pub fn new(task: Option<Task>, joint_width: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let task = task.ok_or_else(|| Error::config("output head has no task configured"))?;
        task.validate()?;
        if hidden == 0 {
            return Err(Error::config("head_hidden must be positive"));
        }
        let out = task.output_width();
        Ok(Self {
            task,
            proj: Affine::glorot(rng, joint_width, out),
            inner1: Affine::glorot(rng, joint_width, hidden),
            inner2: Affine::glorot(rng, hidden, out),
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Records the head on `tape`; `x` is `N × B × D_j`, the result `B × out`.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let skip = tape.linear(x, p[0], Some(p[1]))?;
        let h = tape.linear(x, p[2], Some(p[3]))?;
        let h = tape.relu(h);
        let inner = tape.linear(h, p[4], Some(p[5]))?;
        let sum = tape.add(skip, inner)?;
        tape.mean_axis0(sum)
    }
}

impl Parameterized for OutputHead {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("head.proj.weight".into(), &self.proj.weight),
            ("head.proj.bias".into(), &self.proj.bias),
            ("head.inner1.weight".into(), &self.inner1.weight),
            ("head.inner1.bias".into(), &self.inner1.bias),
            ("head.inner2.weight".into(), &self.inner2.weight),
            ("head.inner2.bias".into(), &self.inner2.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.proj.weight,
            &mut self.proj.bias,
            &mut self.inner1.weight,
            &mut self.inner1.bias,
            &mut self.inner2.weight,
            &mut self.inner2.bias,
        ]
    }
}

/// Head output `B × out` for a fused `N × B × D_j` tensor.
pub fn output_head(j_fusion: &Tensor, head: &OutputHead) -> Result<Tensor> {
    j_fusion.expect_rank(3, "j_fusion")?;
    let mut tape = Tape::new();
    let params: Vec<Var> = head.params().into_iter().map(|(_, t)| tape.constant(t.clone())).collect();
    let x = tape.constant(j_fusion.clone());
    let y = head.forward(&mut tape, &params, x)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lif::SpikeLayout;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn fourier_align_examples() {
        let zeros = SpikeTensor::new(Tensor::zeros(&[4, 2, 3]), SpikeLayout::Generic).unwrap();
        let f = fourier_align(&zeros).unwrap();
        assert_eq!(f.shape(), &[4, 2, 6]);
        assert!(f.data().iter().all(|&v| v == 0.0));
        assert_eq!(f.len(), 2 * 4 * 3 * 2);

        let comb = SpikeTensor::new(
            Tensor::new(vec![4, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap(),
            SpikeLayout::Generic,
        )
        .unwrap();
        let f = fourier_align(&comb).unwrap();
        assert_eq!(f.shape(), &[4, 1, 2]);
        let re: Vec<f64> = (0..4).map(|k| f.data()[2 * k]).collect();
        let im: Vec<f64> = (0..4).map(|k| f.data()[2 * k + 1]).collect();
        assert_eq!(re, vec![2.0, 0.0, 2.0, 0.0]);
        assert!(im.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn fourier_align_pads_time_to_power_of_two() {
        let s = SpikeTensor::new(Tensor::full(&[3, 1, 2], 1.0), SpikeLayout::Generic).unwrap();
        assert_eq!(fourier_align(&s).unwrap().shape(), &[4, 1, 4]);
    }

    #[test]
    fn joint_project_examples() {
        let mut m = JointModule::new(JointSpaceConfig { joint_width: 5, ..Default::default() }, 3, 2, &mut rng()).unwrap();
        m.psi_image.bias = Tensor::zeros(&[5]);
        m.psi_series.bias = Tensor::zeros(&[5]);
        let fi = Tensor::zeros(&[4, 2, 6]);
        let fs = Tensor::zeros(&[4, 2, 4]);
        let p = joint_project(&fi, &fs, &m).unwrap();
        assert_eq!(p.j_align.shape(), &[4, 2, 5]);
        assert!(p.j_align.data().iter().all(|&v| v == 0.0));

        m.psi_series = Affine::zeros(4, 5);
        let fi = Tensor::full(&[4, 2, 6], 0.5);
        let a = joint_project(&fi, &Tensor::full(&[4, 2, 4], 3.0), &m).unwrap();
        let b = joint_project(&fi, &Tensor::full(&[4, 2, 4], -7.0), &m).unwrap();
        assert_eq!(a.j_align, b.j_align);
        assert_eq!(a.j_align, a.s_image);

        assert!(joint_project(&Tensor::zeros(&[4, 2, 5]), &fs, &m).is_err());
    }

    #[test]
    fn similarity_examples() {
        let a = Tensor::from_vec(vec![0.3, -1.0]);
        assert_eq!(similarity(&a, &a, 0.5).unwrap(), 1.0);
        let b = Tensor::from_vec(vec![1.3, 0.0]);
        assert!((similarity(&a, &b, 0.5).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let c = Tensor::from_vec(vec![2.0, 0.0]);
        let z = Tensor::from_vec(vec![0.0, 0.0]);
        assert!((similarity(&c, &z, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!(similarity(&a, &Tensor::from_vec(vec![1.0]), 1.0).is_err());
    }

    #[test]
    fn jwam_examples() {
        assert_eq!(jwam_weights(0.4, 0.4), (0.5, 0.5));
        let (wi, wt) = jwam_weights(2f64.ln(), 0.0);
        assert!((wi - 2.0 / 3.0).abs() < 1e-15 && (wt - 1.0 / 3.0).abs() < 1e-15);
        let (wi, wt) = jwam_weights(1.0, 0.1);
        assert!((wi + wt - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fuse_examples() {
        let s = Tensor::full(&[2, 1, 4], 0.7);
        let zero = Tensor::zeros(&[2, 1, 4]);
        let p = Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
        assert!(fuse(&s, &s, &zero, &p).unwrap().data().iter().all(|&v| v == 0.0));

        let si = Tensor::new(vec![1, 1, 3], vec![0.1, 0.5, 2.0]).unwrap();
        let st = Tensor::new(vec![1, 1, 3], vec![1.0, 0.0, 0.3]).unwrap();
        let ja = si.zip_map(&st, |a, b| a + b).unwrap();
        let only_image = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let fused = fuse(&si, &st, &ja, &only_image).unwrap();
        let blank = Tensor::zeros(&[1, 1, 3]);
        let reference = fuse(&si, &blank, &ja, &only_image).unwrap();
        assert_eq!(fused, reference);
        assert!(fuse(&si, &Tensor::zeros(&[1, 1, 2]), &ja, &only_image).is_err());
    }

    #[test]
    fn head_examples() {
        let mut head = OutputHead::new(Some(Task::Classification { classes: 5 }), 4, 6, &mut rng()).unwrap();
        let x = Tensor::full(&[8, 3, 4], 0.3);
        assert_eq!(output_head(&x, &head).unwrap().shape(), &[3, 5]);

        head.inner1 = Affine::zeros(4, 6);
        head.inner2 = Affine::zeros(6, 5);
        let got = output_head(&x, &head).unwrap();
        let proj = crate::numerics::linear(&x, &head.proj.weight, Some(&head.proj.bias)).unwrap();
        for b in 0..3 {
            for o in 0..5 {
                let mean: f64 = (0..8).map(|t| proj.data()[(t * 3 + b) * 5 + o]).sum::<f64>() / 8.0;
                assert!((got.data()[b * 5 + o] - mean).abs() < 1e-15);
            }
        }

        head.proj = Affine::zeros(4, 5);
        head.proj.bias = Tensor::new(vec![5], vec![1.0, -2.0, 0.5, 0.0, 3.0]).unwrap();
        let got = output_head(&x, &head).unwrap();
        assert_eq!(&got.data()[..5], head.proj.bias.data());

        assert!(OutputHead::new(None, 4, 6, &mut rng()).is_err());
        assert!(OutputHead::new(Some(Task::Regression { horizon: 0 }), 4, 6, &mut rng()).is_err());
    }

    #[test]
    fn adapt_sigma_examples() {
        assert_eq!(adapt_sigma(&[0.0; 6], 1e-6), 1e-6);
        assert_eq!(adapt_sigma(&[-1.0, 1.0, -1.0, 1.0], 1e-6), 1.0);
        assert_eq!(adapt_sigma(&[], 1e-6), 1e-6);
    }
}
