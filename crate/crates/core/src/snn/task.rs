//! Pattern-retention task: Poisson-like input rasters and a noisy structured target.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;

use super::{SnnError, SpikeRaster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// Per-neuron spike probabilities are drawn uniformly from this range.
    pub rate_min: f64,
    pub rate_max: f64,
    /// Probability that a spike of the clean pattern survives in the target.
    pub keep_probability: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self { rate_min: 0.02, rate_max: 0.2, keep_probability: 0.95 }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), SnnError> {
        let prob = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SnnError::Param { name, value: v, reason: "must be a probability" })
            }
        };
        prob("rate_min", self.rate_min)?;
        prob("rate_max", self.rate_max)?;
        prob("keep_probability", self.keep_probability)?;
        if self.rate_min > self.rate_max {
            return Err(SnnError::Param { name: "rate_min", value: self.rate_min, reason: "exceeds rate_max" });
        }
        Ok(())
    }
}

pub fn input_rates(neurons: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..neurons)
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect()
}

/// Independent Bernoulli draw per neuron and step.
pub fn generate_poisson_input(rates: &[f64], steps: usize, seed: u64) -> Result<SpikeRaster, SnnError> {
    if let Some(&r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(SnnError::Param { name: "rate", value: r, reason: "must be a probability" });
    }
    let mut rng = seeded(seed);
    let bits = (0..steps)
        .flat_map(|_| rates.iter().map(|&r| r > 0.0 && rng.random_bool(r)).collect::<Vec<_>>())
        .collect();
    SpikeRaster::from_bits(rates.len(), steps, bits)
}

/// Diagonal stripes: neuron `i` fires at step `n` when `(n + slope * i + phase) mod period < width`.
/// Period, width, slope and phase come from the seed.
pub fn clean_pattern(neurons: usize, steps: usize, seed: u64) -> SpikeRaster {
    let mut rng = seeded(seed);
    let period = rng.random_range(10..=20usize);
    let width = (period / 5).max(1);
    let slope = rng.random_range(1..=3usize);
    let phase = rng.random_range(0..period);
    let mut out = SpikeRaster::zeros(neurons, steps);
    for n in 0..steps {
        for i in 0..neurons {
            out.set(n, i, (n + slope * i + phase) % period < width);
        }
    }
    out
}

/// Keeps each spike of `clean` with probability `p`.
pub fn generate_target(clean: &SpikeRaster, p: f64, seed: u64) -> Result<SpikeRaster, SnnError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SnnError::Param { name: "keep_probability", value: p, reason: "must be a probability" });
    }
    let mut rng = seeded(seed);
    let bits = clean.bits().iter().map(|&b| rng.random_bool(p) && b).collect();
    SpikeRaster::from_bits(clean.neurons(), clean.steps(), bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_rates() {
        assert_eq!(generate_poisson_input(&[0.0; 7], 20, 1).unwrap().count(), 0);
        assert_eq!(generate_poisson_input(&[1.0; 7], 20, 1).unwrap().count(), 140);
        assert!(generate_poisson_input(&[1.5], 2, 1).is_err());
    }

    #[test]
    fn spike_count_follows_binomial() {
        let s = generate_poisson_input(&[0.1; 700], 250, 9).unwrap();
        let mean = 17_500.0;
        let sd = (175_000.0f64 * 0.1 * 0.9).sqrt();
        assert!((s.count() as f64 - mean).abs() < 3.0 * sd);
    }

    #[test]
    fn target_keeps_expected_fraction() {
        let clean = clean_pattern(250, 250, 3);
        assert_eq!(generate_target(&clean, 1.0, 0).unwrap(), clean);
        assert_eq!(generate_target(&clean, 0.0, 0).unwrap().count(), 0);
        let kept = generate_target(&clean, 0.95, 5).unwrap();
        let n = clean.count() as f64;
        let sd = (n * 0.95 * 0.05).sqrt();
        assert!((kept.count() as f64 - 0.95 * n).abs() < 3.0 * sd);
        for (k, c) in kept.bits().iter().zip(clean.bits()) {
            assert!(!k || *c);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let rates = input_rates(50, 0.02, 0.2, 4);
        assert!(rates.iter().all(|r| (0.02..0.2).contains(r)));
        assert_eq!(generate_poisson_input(&rates, 30, 8), generate_poisson_input(&rates, 30, 8));
        assert_eq!(clean_pattern(10, 40, 2), clean_pattern(10, 40, 2));
        assert!(clean_pattern(10, 40, 2).count() > 0);
    }
}
