//! Pins `e_logic` and `a_write` so the convolution layer hits anchor ratios between the
//! functional encoding and PB-CSR.
//!
//! Ratios are taken on total pass energy. With the capacity terms and `a_leak` fixed the
//! energy is affine in `(a_read, a_write, e_logic)`, so each anchor is solved in closed
//! form: the forward ratio (which has no writes) fixes `e_logic`, then the backward ratio
//! fixes `a_write`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{ConvGeometry, FunctionalStore, SynapseStore};
use crate::trace::AccessTrace;

use super::{pass_energy, CostModel, EnergyError};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CalibrationError {
    #[error("anchor `{name}` = {value} must be positive and finite")]
    Anchor { name: &'static str, value: f64 },
    #[error("no positive constants reach {name} = {value}: {reason}")]
    Infeasible { name: &'static str, value: f64, reason: &'static str },
    #[error("calibration missed {name}: wanted {wanted}, got {got}")]
    Missed { name: &'static str, wanted: f64, got: f64 },
    #[error("energy model: {0}")]
    Energy(String),
}

impl From<EnergyError> for CalibrationError {
    fn from(e: EnergyError) -> Self {
        CalibrationError::Energy(e.to_string())
    }
}

impl From<crate::store::StoreError> for CalibrationError {
    fn from(e: crate::store::StoreError) -> Self {
        CalibrationError::Energy(e.to_string())
    }
}

/// Target energy ratios functional / PB-CSR on a convolution layer. Absent anchors leave
/// the corresponding constant untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationAnchors {
    #[serde(default)]
    pub conv_forward_ratio: Option<f64>,
    #[serde(default)]
    pub conv_backward_ratio: Option<f64>,
    #[serde(default = "default_geometry")]
    pub geometry: ConvGeometry,
    #[serde(default = "default_bits")]
    pub b_w: u32,
}

fn default_geometry() -> ConvGeometry {
    ConvGeometry { in_h: 28, in_w: 28, k_h: 3, k_w: 3, c_in: 32, c_out: 32 }
}

fn default_bits() -> u32 {
    8
}

impl Default for CalibrationAnchors {
    /// Forward overhead of 5% and a 58% backward saving on the 28x28x32 3x3 layer at 8 bits.
    fn default() -> Self {
        Self {
            conv_forward_ratio: Some(1.05),
            conv_backward_ratio: Some(0.42),
            geometry: default_geometry(),
            b_w: default_bits(),
        }
    }
}

impl CalibrationAnchors {
    pub fn none() -> Self {
        Self { conv_forward_ratio: None, conv_backward_ratio: None, ..Self::default() }
    }

    /// Both ratios multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            conv_forward_ratio: self.conv_forward_ratio.map(|r| r * factor),
            conv_backward_ratio: self.conv_backward_ratio.map(|r| r * factor),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub model: CostModel,
    pub forward_ratio: f64,
    pub backward_ratio: f64,
}

/// Energy components that multiply `a_read`, `a_write` and `e_logic`, plus the leakage
/// of the pass, which calibration leaves fixed.
struct Parts {
    read: f64,
    write: f64,
    logic: f64,
    leak: f64,
}

fn parts(t: &AccessTrace, base: &CostModel) -> Result<Parts, EnergyError> {
    let zero = CostModel { a_read: 0.0, a_write: 0.0, a_leak: 0.0, e_logic: 0.0, ..*base };
    Ok(Parts {
        read: pass_energy(t, &CostModel { a_read: 1.0, ..zero })?.active_pj,
        write: pass_energy(t, &CostModel { a_write: 1.0, ..zero })?.active_pj,
        logic: pass_energy(t, &CostModel { e_logic: 1.0, ..zero })?.active_pj,
        leak: pass_energy(t, &CostModel { a_leak: base.a_leak, ..zero })?.leakage_pj,
    })
}

fn check_anchor(name: &'static str, value: Option<f64>) -> Result<Option<f64>, CalibrationError> {
    match value {
        Some(v) if !(v.is_finite() && v > 0.0) => Err(CalibrationError::Anchor { name, value: v }),
        other => Ok(other),
    }
}

/// Solves `x * a + rest_f = r * (x * b + rest_c)` for a positive `x`.
fn solve(name: &'static str, r: f64, a: f64, rest_f: f64, b: f64, rest_c: f64) -> Result<f64, CalibrationError> {
    let denom = a - r * b;
    if denom <= 0.0 {
        return Err(CalibrationError::Infeasible {
            name,
            value: r,
            reason: "the tuned term grows faster for PB-CSR than for the functional encoding",
        });
    }
    let x = (r * rest_c - rest_f) / denom;
    if !(x.is_finite() && x > 0.0) {
        return Err(CalibrationError::Infeasible { name, value: r, reason: "the solution is not positive" });
    }
    Ok(x)
}

pub fn calibrate_defaults(base: &CostModel, anchors: &CalibrationAnchors) -> Result<CalibrationResult, CalibrationError> {
    base.validate()?;
    let fwd_anchor = check_anchor("conv_forward_ratio", anchors.conv_forward_ratio)?;
    let bwd_anchor = check_anchor("conv_backward_ratio", anchors.conv_backward_ratio)?;
    let g = anchors.geometry;
    let func = FunctionalStore::<f64>::build(g, &vec![0.0; g.kernel_len()], anchors.b_w)?;
    let csr = func.to_csr();
    let (ff, fb) = (parts(&func.forward_pass_trace(), base)?, parts(&func.backward_pass_trace(), base)?);
    let (cf, cb) = (parts(&csr.forward_pass_trace(), base)?, parts(&csr.backward_pass_trace(), base)?);

    let mut model = *base;
    let energy = |p: &Parts, m: &CostModel| m.a_read * p.read + m.a_write * p.write + m.e_logic * p.logic + p.leak;

    if let Some(r) = fwd_anchor {
        let rest = |p: &Parts| model.a_read * p.read + model.a_write * p.write + p.leak;
        model.e_logic = solve("conv_forward_ratio", r, ff.logic, rest(&ff), cf.logic, rest(&cf))?;
    }
    if let Some(r) = bwd_anchor {
        let rest = |p: &Parts| model.a_read * p.read + model.e_logic * p.logic + p.leak;
        model.a_write = solve("conv_backward_ratio", r, fb.write, rest(&fb), cb.write, rest(&cb))?;
    }

    let forward_ratio = energy(&ff, &model) / energy(&cf, &model);
    let backward_ratio = energy(&fb, &model) / energy(&cb, &model);
    for (name, wanted, got) in [
        ("conv_forward_ratio", fwd_anchor, forward_ratio),
        ("conv_backward_ratio", bwd_anchor, backward_ratio),
    ] {
        if let Some(w) = wanted {
            if (got - w).abs() > 1e-9 * w {
                return Err(CalibrationError::Missed { name, wanted: w, got });
            }
        }
    }
    Ok(CalibrationResult { model, forward_ratio, backward_ratio })
}
