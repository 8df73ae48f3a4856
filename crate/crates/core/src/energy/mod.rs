//! Access-trace energy model.
//!
//! Per-access energies follow a square-root capacity trend:
//! `e_read = a_read * word * (1 + b_read * sqrt(C))`,
//! `e_write = a_write * word * (1 + b_write * sqrt(C))`,
//! leakage power `p_leak = a_leak * C`, plus a constant `e_logic` per address evaluation.
//! Leakage of a pass is `sum(p_leak(C)) * T` where `T` counts the serialized memory
//! accesses and logic evaluations of the pass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Scheme, DEFAULT_BITMAP_WORD};
use crate::trace::{AccessTrace, BankSpec};

mod calibrate;
mod sweep;

pub use calibrate::{calibrate_defaults, CalibrationAnchors, CalibrationError, CalibrationResult};
pub use sweep::{
    conv_cell, density_energies, fc_cell, grid_point, leak_reference, layer_sweep, sweep_density_leakage,
    GridPoint, GridSpec, Layer, SchemeEnergy, SweepRow,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("bank {kind} with {word_bits}-bit words has zero capacity but is accessed")]
    UnknownBank { kind: crate::trace::BankKind, word_bits: u32 },
    #[error("leak fraction must lie in [0, 1), got {0}")]
    LeakFraction(f64),
    #[error("density must lie in (0, 1], got {0}")]
    Density(f64),
    #[error("grid needs at least two points per axis")]
    GridResolution,
    #[error("cost model constant `{0}` must be finite and nonnegative")]
    Constant(&'static str),
    #[error("scheme {scheme} is not available for {layer} layers")]
    Scheme { scheme: Scheme, layer: &'static str },
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Matrix(#[from] crate::matrix::MatrixError),
}

/// Cost model constants. Energies are in picojoules, relative to this model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// Read energy per bit of word width (pJ).
    pub a_read: f64,
    /// Capacity sensitivity of reads (per sqrt(bit)).
    pub b_read: f64,
    /// Write energy per bit of word width (pJ).
    pub a_write: f64,
    /// Capacity sensitivity of writes (per sqrt(bit)).
    pub b_write: f64,
    /// Leakage power per stored bit (pJ per time unit).
    pub a_leak: f64,
    /// Energy per address-logic evaluation (pJ).
    pub e_logic: f64,
    /// Round bank capacities up to a power of two before costing them.
    pub pow2_capacity: bool,
    /// Bitmap word width used when the sweeps build PB-BMP stores.
    pub w_word: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        Self::factory()
    }
}

impl CostModel {
    /// Uncalibrated constants.
    pub const fn factory() -> Self {
        Self {
            a_read: 0.05,
            b_read: 1.0 / 256.0,
            a_write: 0.075,
            b_write: 1e-4,
            a_leak: 1e-6,
            e_logic: 0.05,
            pow2_capacity: true,
            w_word: DEFAULT_BITMAP_WORD,
        }
    }

    /// Factory constants calibrated against [`CalibrationAnchors::default`]. Computed once.
    pub fn calibrated_default() -> Result<Self, CalibrationError> {
        static CACHE: std::sync::OnceLock<Result<CostModel, CalibrationError>> = std::sync::OnceLock::new();
        CACHE
            .get_or_init(|| {
                calibrate_defaults(&Self::factory(), &CalibrationAnchors::default()).map(|r| r.model)
            })
            .clone()
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let fields = [
            ("a_read", self.a_read),
            ("b_read", self.b_read),
            ("a_write", self.a_write),
            ("b_write", self.b_write),
            ("a_leak", self.a_leak),
            ("e_logic", self.e_logic),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(EnergyError::Constant(name));
            }
        }
        if !(1..=64).contains(&self.w_word) {
            return Err(EnergyError::Constant("w_word"));
        }
        Ok(())
    }

    pub fn effective_capacity(&self, capacity_bits: u64) -> u64 {
        if self.pow2_capacity && capacity_bits > 0 {
            capacity_bits.next_power_of_two()
        } else {
            capacity_bits
        }
    }

    pub fn e_read(&self, capacity_bits: u64, word_bits: u32) -> f64 {
        let c = self.effective_capacity(capacity_bits) as f64;
        self.a_read * word_bits as f64 * (1.0 + self.b_read * c.sqrt())
    }

    pub fn e_write(&self, capacity_bits: u64, word_bits: u32) -> f64 {
        let c = self.effective_capacity(capacity_bits) as f64;
        self.a_write * word_bits as f64 * (1.0 + self.b_write * c.sqrt())
    }

    pub fn p_leak(&self, capacity_bits: u64) -> f64 {
        self.a_leak * self.effective_capacity(capacity_bits) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BankEnergy {
    pub bank: BankSpec,
    pub reads: u64,
    pub writes: u64,
    pub read_pj: f64,
    pub write_pj: f64,
    pub leak_pj: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PassEnergyReport {
    pub scheme: Option<Scheme>,
    pub active_pj: f64,
    pub leakage_pj: f64,
    pub logic_pj: f64,
    pub banks: Vec<BankEnergy>,
    pub trace: AccessTrace,
}

impl PassEnergyReport {
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = Some(scheme);
        self
    }

    pub fn total_pj(&self) -> f64 {
        self.active_pj + self.leakage_pj
    }
}

#[cfg(debug_assertions)]
static PASS_ENERGY_CALLS: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

/// Number of [`pass_energy`] evaluations so far in this process. Always zero in release builds.
pub fn audit_count() -> u64 {
    #[cfg(debug_assertions)]
    {
        PASS_ENERGY_CALLS.load(std::sync::atomic::Ordering::Relaxed)
    }
    #[cfg(not(debug_assertions))]
    {
        0
    }
}

/// Prices a trace. Every energy figure in the crate goes through this function.
pub fn pass_energy(trace: &AccessTrace, model: &CostModel) -> Result<PassEnergyReport, EnergyError> {
    #[cfg(debug_assertions)]
    PASS_ENERGY_CALLS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);

    let time = trace.time_units() as f64;
    let mut banks = Vec::new();
    let mut active = 0.0;
    let mut leakage = 0.0;
    for (&bank, counts) in trace.banks() {
        if bank.capacity_bits == 0 && bank.word_bits > 0 && counts.accesses() > 0 {
            return Err(EnergyError::UnknownBank { kind: bank.kind, word_bits: bank.word_bits });
        }
        let read_pj = counts.reads as f64 * model.e_read(bank.capacity_bits, bank.word_bits);
        let write_pj = counts.writes as f64 * model.e_write(bank.capacity_bits, bank.word_bits);
        let leak_pj = model.p_leak(bank.capacity_bits) * time;
        active += read_pj + write_pj;
        leakage += leak_pj;
        banks.push(BankEnergy { bank, reads: counts.reads, writes: counts.writes, read_pj, write_pj, leak_pj });
    }
    let logic_pj = trace.logic_evals() as f64 * model.e_logic;
    Ok(PassEnergyReport {
        scheme: None,
        active_pj: active + logic_pj,
        leakage_pj: leakage,
        logic_pj,
        banks,
        trace: trace.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::BankKind;

    fn flat(e_read: f64) -> CostModel {
        CostModel {
            a_read: e_read,
            b_read: 0.0,
            a_write: 1.0,
            b_write: 0.0,
            a_leak: 0.0,
            e_logic: 0.0,
            pow2_capacity: false,
            w_word: 32,
        }
    }

    #[test]
    fn empty_trace_costs_nothing() {
        let r = pass_energy(&AccessTrace::new(), &CostModel::factory()).unwrap();
        assert_eq!(r.active_pj, 0.0);
        assert_eq!(r.leakage_pj, 0.0);
    }

    #[test]
    fn constant_read_energy() {
        let bank = BankSpec::new(BankKind::Weight, 64, 1);
        let mut t = AccessTrace::new();
        t.read(bank, 10);
        assert_eq!(pass_energy(&t, &flat(2.0)).unwrap().active_pj, 20.0);
    }

    #[test]
    fn linear_in_traces() {
        let m = CostModel::factory();
        let a = BankSpec::new(BankKind::Weight, 1000, 8);
        let b = BankSpec::new(BankKind::ColIdx, 300, 5);
        let mut t1 = AccessTrace::new();
        t1.read(a, 7).write(b, 2).logic(11);
        let mut t2 = AccessTrace::new();
        t2.read(b, 3).write(a, 4);
        let sum = pass_energy(&(t1.clone() + t2.clone()), &m).unwrap().active_pj;
        let parts = pass_energy(&t1, &m).unwrap().active_pj + pass_energy(&t2, &m).unwrap().active_pj;
        assert!((sum - parts).abs() <= 1e-12 * sum);
    }

    #[test]
    fn accessing_an_empty_bank_is_an_error() {
        let mut t = AccessTrace::new();
        t.read(BankSpec::new(BankKind::Weight, 0, 8), 1);
        assert!(pass_energy(&t, &CostModel::factory()).is_err());
        let mut zero_width = AccessTrace::new();
        zero_width.read(BankSpec::new(BankKind::ColIdx, 0, 0), 5);
        assert_eq!(pass_energy(&zero_width, &CostModel::factory()).unwrap().active_pj, 0.0);
    }

    #[test]
    fn capacity_rounding() {
        let m = CostModel::factory();
        assert_eq!(m.effective_capacity(745_472), 1 << 20);
        assert_eq!(m.effective_capacity(0), 0);
        let raw = CostModel { pow2_capacity: false, ..m };
        assert_eq!(raw.effective_capacity(745_472), 745_472);
        assert!(m.e_read(745_472, 8) > raw.e_read(745_472, 8));
    }

    #[test]
    fn leakage_scales_with_time_and_capacity() {
        let m = CostModel { a_leak: 0.5, ..flat(1.0) };
        let bank = BankSpec::new(BankKind::Weight, 16, 4);
        let idle = BankSpec::new(BankKind::RowPtr, 8, 2);
        let mut t = AccessTrace::with_banks([idle]);
        t.read(bank, 3).logic(1);
        let r = pass_energy(&t, &m).unwrap();
        assert_eq!(r.leakage_pj, 0.5 * (16.0 + 8.0) * 4.0);
    }
}
