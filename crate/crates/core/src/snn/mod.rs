//! Discrete-time leaky integrate-and-fire networks trained with surrogate-gradient BPTT.
//!
//! Each layer keeps presynaptic synapse/membrane traces `Q`, `P` and a postsynaptic
//! refractory trace `R`:
//!
//! ```text
//! U[n]   = scale * W^T P[n] - delta * R[n]
//! S[n]   = step(U[n] - theta)          (fires when U >= theta)
//! Q[n+1] = alpha * Q[n] + S_in[n]
//! P[n+1] = beta * P[n] + Q[n]
//! R[n+1] = gamma * R[n] + S[n]
//! ```
//!
//! `scale` is `1 / eta` for quantized layers and 1 otherwise. Rasters are time-major.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

mod layer;
mod network;
mod task;
mod train;
mod vr;

pub use layer::{lif_step, LifLayerState};
pub use network::{bptt_gradients, DenseLayer, Episode, LayerHistory, Network};
pub use task::{clean_pattern, generate_poisson_input, generate_target, input_rates, TaskConfig};
pub use train::{train, EpochRecord, EpochTraces, Precision, TrainConfig, TrainResult};
pub use vr::{van_rossum, van_rossum_grad, vr_filter, vr_distance};

#[derive(Debug, Error, PartialEq)]
pub enum SnnError {
    #[error("dimension mismatch: {what} is {got}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid parameter {name} = {value}: {reason}")]
    Param { name: &'static str, value: f64, reason: &'static str },
    #[error("episode history is missing or incomplete: {0}")]
    History(&'static str),
    #[error("van Rossum distance became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("network needs at least an input and an output layer")]
    Topology,
    #[error(transparent)]
    Quant(#[from] crate::quant::QuantError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

/// How the presynaptic drive is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Full neuron model with synaptic, membrane and refractory traces.
    #[default]
    Lif,
    /// Binary network: `U[n] = scale * W^T S_in[n-1]`, no `Q`, `R` or decay.
    Binary,
}

/// Spike nonlinearity in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    #[default]
    Hard,
    /// Replaces the step by the antiderivative of the surrogate, `x / (beta_s * |x| + 1)`
    /// with `x = U - theta`. Makes the forward pass differentiable for gradient checks.
    Soft,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub theta: f64,
    pub beta_s: f64,
    pub dynamics: Dynamics,
}

impl Default for LifParams {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.75, gamma: 0.875, delta: 1.0, theta: 1.0, beta_s: 10.0, dynamics: Dynamics::Lif }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), SnnError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(0.0..1.0).contains(&v) {
                return Err(SnnError::Param { name, value: v, reason: "decay must lie in [0, 1)" });
            }
        }
        if !self.delta.is_finite() {
            return Err(SnnError::Param { name: "delta", value: self.delta, reason: "must be finite" });
        }
        if !self.theta.is_finite() {
            return Err(SnnError::Param { name: "theta", value: self.theta, reason: "must be finite" });
        }
        if !(self.beta_s > 0.0 && self.beta_s.is_finite()) {
            return Err(SnnError::Param { name: "beta_s", value: self.beta_s, reason: "must be positive" });
        }
        Ok(())
    }
}

/// Surrogate for the derivative of the spike step: `1 / (beta_s * |u - theta| + 1)^2`.
pub fn surrogate_derivative<T: Scalar>(u: T, p: &LifParams) -> T {
    let d = T::lit(p.beta_s) * (u - T::lit(p.theta)).abs() + T::one();
    (d * d).recip()
}

/// Spike output for membrane `u`.
pub fn spike<T: Scalar>(u: T, p: &LifParams, mode: SpikeMode) -> T {
    let x = u - T::lit(p.theta);
    match mode {
        SpikeMode::Hard => {
            if x >= T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        SpikeMode::Soft => x / (T::lit(p.beta_s) * x.abs() + T::one()),
    }
}

/// Binary spike raster, `steps x neurons`, time-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpikeRaster {
    neurons: usize,
    steps: usize,
    bits: Vec<bool>,
}

impl SpikeRaster {
    pub fn zeros(neurons: usize, steps: usize) -> Self {
        Self { neurons, steps, bits: vec![false; neurons * steps] }
    }

    pub fn from_bits(neurons: usize, steps: usize, bits: Vec<bool>) -> Result<Self, SnnError> {
        if bits.len() != neurons * steps {
            return Err(SnnError::Dimension { what: "raster", expected: neurons * steps, got: bits.len() });
        }
        Ok(Self { neurons, steps, bits })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, step: usize, neuron: usize) -> bool {
        self.bits[step * self.neurons + neuron]
    }

    pub fn set(&mut self, step: usize, neuron: usize, v: bool) {
        self.bits[step * self.neurons + neuron] = v;
    }

    pub fn step(&self, step: usize) -> &[bool] {
        &self.bits[step * self.neurons..(step + 1) * self.neurons]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_values<T: Scalar>(&self) -> Vec<T> {
        self.bits.iter().map(|&b| if b { T::one() } else { T::zero() }).collect()
    }
}
