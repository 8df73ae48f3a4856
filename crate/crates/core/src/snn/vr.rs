//! Van Rossum distance between spike trains.
//!
//! Each train is passed through the leaky accumulator `F[n] = lambda * F[n-1] + S[n]`,
//! `lambda = exp(-1 / tau)`, and the distance is the L2 norm of the filtered difference
//! over all neurons and steps.

use crate::Scalar;

use super::{SnnError, SpikeRaster};

fn check(a: usize, b: usize, neurons: usize, steps: usize) -> Result<(), SnnError> {
    if a != neurons * steps {
        return Err(SnnError::Dimension { what: "spike train", expected: neurons * steps, got: a });
    }
    if b != a {
        return Err(SnnError::Dimension { what: "target train", expected: a, got: b });
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<(), SnnError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(SnnError::Param { name: "tau_vr", value: tau, reason: "must be positive" })
    }
}

/// Filtered copy of a time-major train.
pub fn vr_filter<T: Scalar>(s: &[T], neurons: usize, tau: f64) -> Vec<T> {
    let lambda = T::lit((-1.0 / tau).exp());
    let mut f = s.to_vec();
    for k in neurons..f.len() {
        f[k] = lambda * f[k - neurons] + f[k];
    }
    f
}

pub fn vr_distance<T: Scalar>(a: &[T], b: &[T], neurons: usize, steps: usize, tau: f64) -> Result<T, SnnError> {
    check(a.len(), b.len(), neurons, steps)?;
    check_tau(tau)?;
    let diff: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    Ok(vr_filter(&diff, neurons, tau).iter().map(|&d| d * d).sum::<T>().sqrt())
}

pub fn van_rossum(s: &SpikeRaster, t: &SpikeRaster, tau: f64) -> Result<f64, SnnError> {
    if s.neurons() != t.neurons() {
        return Err(SnnError::Dimension { what: "raster neurons", expected: s.neurons(), got: t.neurons() });
    }
    vr_distance(&s.to_values::<f64>(), &t.to_values::<f64>(), s.neurons(), s.steps(), tau)
}

/// Distance and its gradient with respect to every entry of `out`. The gradient is zero
/// when the trains coincide.
pub fn van_rossum_grad<T: Scalar>(
    out: &[T],
    target: &[T],
    neurons: usize,
    steps: usize,
    tau: f64,
) -> Result<(T, Vec<T>), SnnError> {
    check(out.len(), target.len(), neurons, steps)?;
    check_tau(tau)?;
    let diff: Vec<T> = out.iter().zip(target).map(|(&x, &y)| x - y).collect();
    let filtered = vr_filter(&diff, neurons, tau);
    let dist = filtered.iter().map(|&d| d * d).sum::<T>().sqrt();
    if dist == T::zero() {
        return Ok((dist, vec![T::zero(); out.len()]));
    }
    // The filter is linear, so the adjoint is the same recursion run backwards in time.
    let lambda = T::lit((-1.0 / tau).exp());
    let mut g: Vec<T> = filtered.iter().map(|&d| d / dist).collect();
    for k in (0..g.len().saturating_sub(neurons)).rev() {
        g[k] = g[k] + lambda * g[k + neurons];
    }
    Ok((dist, g))
}
