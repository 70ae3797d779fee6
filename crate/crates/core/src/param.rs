//! Learned parameter containers and initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Tensor drawn uniformly from `[-bound, bound]`.
pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Weight matrix `out × in` plus bias, applied along the trailing axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Affine {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> Self {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        Self {
            weight: uniform(rng, &[d_out, d_in], bound),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[d_out, d_in]),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Anything holding named learned tensors in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Records every parameter as a trainable tape leaf, in [`Self::params`] order.
    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|(_, t)| tape.param(t.clone()))
            .collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Overwrites parameters from `(name, tensor)` pairs; names and shapes must match exactly.
    fn load_params(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = self
            .params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != named.len() {
            return Err(Error::Data(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                named.len()
            )));
        }
        for ((name, shape), (got_name, got)) in expected.iter().zip(named) {
            if name != got_name || shape.as_slice() != got.shape() {
                return Err(Error::Data(format!(
                    "parameter mismatch: expected {name} {shape:?}, found {got_name} {:?}",
                    got.shape()
                )));
            }
        }
        for (slot, (_, t)) in self.params_mut().into_iter().zip(named) {
            *slot = t.clone();
        }
        Ok(())
    }
}
