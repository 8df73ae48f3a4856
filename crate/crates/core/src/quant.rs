//! Fixed-point weight and gradient quantization.
//!
//! Weights live on the grid `k * sigma(b_w)` inside the feasible range
//! `[-1 + sigma(b_w), 1 - sigma(b_w)]`, so a `b_w`-bit signed integer code `k` with
//! `|k| <= 2^(b_w-1) - 1` addresses every representable value. Layers scale weights
//! by a power of two `eta` before storage and divide it back out at use.
//!
//! Gradients are normalized by their largest magnitude, mapped to the `b_e`-bit
//! error grid and applied with stochastic rounding onto the weight grid.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Widest supported word for weights, errors and membrane values.
pub const MAX_BITS: u32 = 32;

/// Integer bits of the signed fixed-point format used for stored membrane potentials.
pub const MEMBRANE_INT_BITS: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("{name} = {bits} bits is outside the supported range {min}..={max}")]
    BitWidth {
        name: &'static str,
        bits: u32,
        min: u32,
        max: u32,
    },
    #[error("fan_in must be at least 1")]
    FanIn,
    #[error("rounding step must be positive and finite, got {0}")]
    Step(f64),
    #[error("cannot quantize an empty error vector")]
    EmptyError,
}

/// Quantization step `sigma(b) = 2^(1-b)`.
pub fn sigma<T: Scalar>(bits: u32) -> T {
    T::lit(2f64.powi(1 - bits as i32))
}

/// Feasible weight interval `(-1 + sigma(b_w), 1 - sigma(b_w))`.
pub fn weight_range<T: Scalar>(b_w: u32) -> (T, T) {
    let hi = T::one() - sigma::<T>(b_w);
    (-hi, hi)
}

/// Power-of-two layer scale that maps a uniform `sqrt(3 / fan_in)` initialization onto
/// the feasible weight range: `2^round(log2((1/sigma - 1/2) * sigma / sqrt(3 / fan_in)))`.
pub fn eta<T: Scalar>(b_w: u32, fan_in: usize) -> T {
    let s: f64 = sigma(b_w);
    let ratio = ((1.0 / s - 0.5) * s) / (3.0 / fan_in as f64).sqrt();
    // f64::round is half away from zero, the same convention used for the weight grid.
    T::lit(2f64.powi(ratio.log2().round() as i32))
}

/// Clips `w` to the feasible range and rounds to the nearest grid point (ties away from zero).
pub fn quantize_weight<T: Scalar>(w: T, b_w: u32) -> T {
    let step = sigma::<T>(b_w);
    let (lo, hi) = weight_range::<T>(b_w);
    let clipped = w.max(lo).min(hi);
    (clipped / step).round() * step
}

pub fn quantize_weights<T: Scalar>(weights: &[T], b_w: u32) -> Vec<T> {
    weights.iter().map(|&w| quantize_weight(w, b_w)).collect()
}

/// Signed integer code of the quantized value of `w`.
pub fn weight_code<T: Scalar>(w: T, b_w: u32) -> i32 {
    let q = quantize_weight(w, b_w);
    (q / sigma::<T>(b_w))
        .round()
        .to_i32()
        .expect("grid index fits the code width")
}

/// Real value of a weight code.
pub fn code_value<T: Scalar>(code: i32, b_w: u32) -> T {
    T::lit(code as f64) * sigma::<T>(b_w)
}

/// Normalizes `err` by its largest magnitude and maps it onto the `b_e` grid inside `[-1, 1]`.
///
/// An all-zero vector maps to zeros.
pub fn quantize_error<T: Scalar>(err: &[T], b_e: u32) -> Result<Vec<T>, QuantError> {
    if err.is_empty() {
        return Err(QuantError::EmptyError);
    }
    let peak = err.iter().fold(T::zero(), |m, &e| m.max(e.abs()));
    if peak == T::zero() {
        return Ok(vec![T::zero(); err.len()]);
    }
    let step = sigma::<T>(b_e);
    Ok(err
        .iter()
        .map(|&e| {
            let n = (e / peak).max(-T::one()).min(T::one());
            ((n / step).round() * step).max(-T::one()).min(T::one())
        })
        .collect())
}

/// Rounds `x` down or up to a multiple of `step` with probabilities that make the result unbiased.
pub fn stochastic_round<T: Scalar, R: Rng + ?Sized>(x: T, step: T, rng: &mut R) -> T {
    let scaled = x / step;
    let lower = scaled.floor();
    let frac = (scaled - lower).as_f64();
    // A value already on the grid has frac == 0 and can never move.
    if rng.random::<f64>() < frac {
        (lower + T::one()) * step
    } else {
        lower * step
    }
}

/// Signed fixed-point storage of a membrane potential with `b_m` bits, four of them integer.
pub fn quantize_membrane<T: Scalar>(u: T, b_m: u32) -> T {
    let frac_bits = b_m.saturating_sub(1 + MEMBRANE_INT_BITS) as i32;
    let step = T::lit(2f64.powi(-frac_bits));
    let hi = T::lit(2f64.powi(MEMBRANE_INT_BITS as i32)) - step;
    ((u / step).round() * step).max(-hi).min(hi)
}

/// Bit widths of one quantized layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantConfig {
    /// Weight bits.
    pub b_w: u32,
    /// Error / gradient bits.
    #[serde(default = "default_b_e")]
    pub b_e: u32,
    /// Stored membrane potential bits.
    #[serde(default = "default_b_m")]
    pub b_m: u32,
    /// Connections into the layer. The trainer overrides this per layer.
    #[serde(default = "default_fan_in")]
    pub fan_in: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_b_e() -> u32 {
    8
}
fn default_b_m() -> u32 {
    16
}
fn default_fan_in() -> usize {
    1
}

impl QuantConfig {
    pub fn new(b_w: u32) -> Self {
        Self {
            b_w,
            b_e: default_b_e(),
            b_m: default_b_m(),
            fan_in: default_fan_in(),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        for (name, bits) in [("b_w", self.b_w), ("b_e", self.b_e), ("b_m", self.b_m)] {
            if !(2..=MAX_BITS).contains(&bits) {
                return Err(QuantError::BitWidth {
                    name,
                    bits,
                    min: 2,
                    max: MAX_BITS,
                });
            }
        }
        if self.fan_in == 0 {
            return Err(QuantError::FanIn);
        }
        Ok(())
    }

    pub fn with_fan_in(&self, fan_in: usize) -> Self {
        Self {
            fan_in,
            ..self.clone()
        }
    }

    pub fn eta<T: Scalar>(&self) -> T {
        eta(self.b_w, self.fan_in)
    }
}
