//! Leaky integrate-and-fire dynamics.
//!
//! The discrete update with unit step is
//!
//! ```text
//! v' = v + (I - (v - v_rest)) / tau
//! s  = 1 if v' >= v_th else 0
//! v' = v_reset where s == 1
//! ```
//!
//! Membrane resistance is folded into the input current. Training goes
//! through the threshold with the surrogate derivative `1 / (1 + α|x|)²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tape::{self, Tape, Var};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifParams {
    /// Membrane time constant in steps, must exceed 1.
    pub tau: f64,
    pub v_rest: f64,
    pub v_th: f64,
    pub v_reset: f64,
    /// Sharpness α of the surrogate derivative.
    pub surrogate_slope: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau: 2.0,
            v_rest: 0.0,
            v_th: 1.0,
            v_reset: 0.0,
            surrogate_slope: 2.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.tau, self.v_rest, self.v_th, self.v_reset, self.surrogate_slope];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("LIF parameters must be finite"));
        }
        if self.tau <= 1.0 {
            return Err(Error::config(format!("tau must exceed 1, got {}", self.tau)));
        }
        if self.v_th <= self.v_rest {
            return Err(Error::config("v_th must exceed v_rest"));
        }
        if self.v_reset > self.v_th {
            return Err(Error::config("v_reset must not exceed v_th"));
        }
        if self.surrogate_slope <= 0.0 {
            return Err(Error::config("surrogate_slope must be positive"));
        }
        Ok(())
    }

    /// Membrane update without threshold or reset.
    pub fn charge(&self, v: f64, current: f64) -> f64 {
        tape::lif_charge(v, current, self.tau, self.v_rest)
    }
}

/// Membrane potentials for a population.
#[derive(Clone, Debug, PartialEq)]
pub struct LifState {
    pub v: Tensor,
}

impl LifState {
    pub fn at_rest(shape: &[usize], params: &LifParams) -> Self {
        Self {
            v: Tensor::full(shape, params.v_rest),
        }
    }
}

/// Axis layout of a spike train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeLayout {
    /// `T × B × C × H × W`
    Image,
    /// `T × B × C × L`
    Series,
    /// Any rank with a leading time axis.
    Generic,
}

impl SpikeLayout {
    fn rank(self) -> Option<usize> {
        match self {
            SpikeLayout::Image => Some(5),
            SpikeLayout::Series => Some(4),
            SpikeLayout::Generic => None,
        }
    }
}

/// Binary time-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTensor {
    values: Tensor,
    layout: SpikeLayout,
}

impl SpikeTensor {
    pub fn new(values: Tensor, layout: SpikeLayout) -> Result<Self> {
        if values.rank() < 2 {
            return Err(Error::shape("spike tensor needs a time axis and at least one more"));
        }
        if let Some(rank) = layout.rank() {
            values.expect_rank(rank, "spike tensor")?;
        }
        if values.shape()[0] == 0 {
            return Err(Error::shape("spike tensor has zero time steps"));
        }
        if let Some(v) = values.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!("spike tensor holds non-binary value {v}")));
        }
        Ok(Self { values, layout })
    }

    /// Stacks per-step tensors along a new leading time axis.
    pub fn from_steps(steps: &[&Tensor], layout: SpikeLayout) -> Result<Self> {
        Self::new(Tensor::stack(steps)?, layout)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn layout(&self) -> SpikeLayout {
        self.layout
    }

    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn time_steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn step(&self, t: usize) -> &[f64] {
        self.values.outer(t)
    }
}

/// One membrane update for every neuron; returns the new state and the spikes.
pub fn lif_step(state: &LifState, current: &Tensor, params: &LifParams) -> Result<(LifState, Tensor)> {
    state.v.expect_same_shape(current)?;
    let n = current.len();
    let mut v = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for (&vv, &i) in state.v.data().iter().zip(current.data()) {
        let pre = params.charge(vv, i);
        if pre - params.v_th >= 0.0 {
            s.push(1.0);
            v.push(params.v_reset);
        } else {
            s.push(0.0);
            v.push(pre);
        }
    }
    let shape = current.shape().to_vec();
    Ok((
        LifState {
            v: Tensor::new(shape.clone(), v)?,
        },
        Tensor::from_parts(shape, s),
    ))
}

/// Runs [`lif_step`] over the leading time axis of `currents`.
pub fn lif_sequence(currents: &Tensor, params: &LifParams, initial: &LifState) -> Result<SpikeTensor> {
    if currents.rank() < 2 || currents.shape()[0] == 0 {
        return Err(Error::shape(format!(
            "lif_sequence needs T >= 1 steps, got shape {:?}",
            currents.shape()
        )));
    }
    let step_shape = &currents.shape()[1..];
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(currents.len());
    for t in 0..currents.shape()[0] {
        let current = Tensor::new(step_shape.to_vec(), currents.outer(t).to_vec())?;
        let (next, spikes) = lif_step(&state, &current, params)?;
        out.extend_from_slice(spikes.data());
        state = next;
    }
    SpikeTensor::new(
        Tensor::new(currents.shape().to_vec(), out)?,
        SpikeLayout::Generic,
    )
}

/// Surrogate derivative of the threshold at `v - v_th = x`.
pub fn surrogate_grad(x: f64, slope: f64) -> f64 {
    tape::surrogate_derivative(x, slope)
}

pub fn surrogate_grad_tensor(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| surrogate_grad(v, slope))
}

/// Records one LIF step on a tape: returns `(next_v, spikes)`.
pub fn lif_step_on_tape(tape: &mut Tape, v: Var, current: Var, params: &LifParams) -> Result<(Var, Var)> {
    let pre = tape.lif_charge(v, current, params.tau, params.v_rest)?;
    let spikes = tape.spike(pre, params.v_th, params.surrogate_slope);
    let next = tape.reset(pre, spikes, params.v_reset)?;
    Ok((next, spikes))
}

/// Per-neuron spike counts and firing rates over the time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseStats {
    pub counts: Tensor,
    pub rates: Tensor,
}

pub fn pulse_accumulate(spikes: &SpikeTensor) -> PulseStats {
    let t = spikes.time_steps();
    let shape = spikes.shape()[1..].to_vec();
    let width = spikes.values().len() / t;
    let mut counts = vec![0.0; width];
    for step in 0..t {
        for (c, s) in counts.iter_mut().zip(spikes.step(step)) {
            *c += s;
        }
    }
    let rates = counts.iter().map(|c| c / t as f64).collect();
    PulseStats {
        counts: Tensor::from_parts(shape.clone(), counts),
        rates: Tensor::from_parts(shape, rates),
    }
}
