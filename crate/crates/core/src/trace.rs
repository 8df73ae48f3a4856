//! Memory access traces.
//!
//! A trace counts reads and writes per memory bank plus address-logic evaluations.
//! Banks are identified by their full geometry, so traces from different stores or
//! layers can be summed without losing the metadata the cost model needs.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    RowPtr,
    ColIdx,
    Bitmap,
    Weight,
}

impl BankKind {
    pub fn is_indirection(self) -> bool {
        !matches!(self, BankKind::Weight)
    }

    pub fn tag(self) -> u8 {
        match self {
            BankKind::RowPtr => 0,
            BankKind::ColIdx => 1,
            BankKind::Bitmap => 2,
            BankKind::Weight => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => BankKind::RowPtr,
            1 => BankKind::ColIdx,
            2 => BankKind::Bitmap,
            3 => BankKind::Weight,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BankKind::RowPtr => "row_ptr",
            BankKind::ColIdx => "col_idx",
            BankKind::Bitmap => "bitmap",
            BankKind::Weight => "weight",
        }
    }
}

impl fmt::Display for BankKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry of one physical memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BankSpec {
    pub kind: BankKind,
    pub capacity_bits: u64,
    pub word_bits: u32,
}

impl BankSpec {
    pub fn new(kind: BankKind, capacity_bits: u64, word_bits: u32) -> Self {
        Self { kind, capacity_bits, word_bits }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankCounts {
    pub reads: u64,
    pub writes: u64,
}

impl BankCounts {
    pub fn accesses(&self) -> u64 {
        self.reads + self.writes
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTrace {
    banks: BTreeMap<BankSpec, BankCounts>,
    logic_evals: u64,
}

impl AccessTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero-count trace that still lists `banks` (leakage needs every bank of a store).
    pub fn with_banks(banks: impl IntoIterator<Item = BankSpec>) -> Self {
        Self {
            banks: banks.into_iter().map(|b| (b, BankCounts::default())).collect(),
            logic_evals: 0,
        }
    }

    pub fn read(&mut self, bank: BankSpec, n: u64) -> &mut Self {
        self.banks.entry(bank).or_default().reads += n;
        self
    }

    pub fn write(&mut self, bank: BankSpec, n: u64) -> &mut Self {
        self.banks.entry(bank).or_default().writes += n;
        self
    }

    pub fn logic(&mut self, n: u64) -> &mut Self {
        self.logic_evals += n;
        self
    }

    pub fn banks(&self) -> impl Iterator<Item = (&BankSpec, &BankCounts)> {
        self.banks.iter()
    }

    pub fn counts(&self, bank: &BankSpec) -> BankCounts {
        self.banks.get(bank).copied().unwrap_or_default()
    }

    pub fn logic_evals(&self) -> u64 {
        self.logic_evals
    }

    fn sum_where(&self, pred: impl Fn(BankKind) -> bool, f: impl Fn(&BankCounts) -> u64) -> u64 {
        self.banks.iter().filter(|(b, _)| pred(b.kind)).map(|(_, c)| f(c)).sum()
    }

    pub fn indirection_reads(&self) -> u64 {
        self.sum_where(BankKind::is_indirection, |c| c.reads)
    }

    pub fn reads_of(&self, kind: BankKind) -> u64 {
        self.sum_where(|k| k == kind, |c| c.reads)
    }

    pub fn weight_reads(&self) -> u64 {
        self.reads_of(BankKind::Weight)
    }

    pub fn weight_writes(&self) -> u64 {
        self.sum_where(|k| k == BankKind::Weight, |c| c.writes)
    }

    /// Memory accesses of every kind.
    pub fn memory_accesses(&self) -> u64 {
        self.banks.values().map(BankCounts::accesses).sum()
    }

    /// Serial-time proxy: one unit per memory access or logic evaluation.
    pub fn time_units(&self) -> u64 {
        self.memory_accesses() + self.logic_evals
    }

    pub fn is_empty(&self) -> bool {
        self.logic_evals == 0 && self.banks.values().all(|c| c.accesses() == 0)
    }

    /// Trace repeated `k` times.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            banks: self
                .banks
                .iter()
                .map(|(b, c)| (*b, BankCounts { reads: c.reads * k, writes: c.writes * k }))
                .collect(),
            logic_evals: self.logic_evals * k,
        }
    }
}

impl AddAssign<&AccessTrace> for AccessTrace {
    fn add_assign(&mut self, rhs: &AccessTrace) {
        for (bank, c) in &rhs.banks {
            let e = self.banks.entry(*bank).or_default();
            e.reads += c.reads;
            e.writes += c.writes;
        }
        self.logic_evals += rhs.logic_evals;
    }
}

impl AddAssign for AccessTrace {
    fn add_assign(&mut self, rhs: AccessTrace) {
        *self += &rhs;
    }
}

impl Add for AccessTrace {
    type Output = AccessTrace;

    fn add(mut self, rhs: AccessTrace) -> AccessTrace {
        self += &rhs;
        self
    }
}

impl<'a> std::iter::Sum<&'a AccessTrace> for AccessTrace {
    fn sum<I: Iterator<Item = &'a AccessTrace>>(iter: I) -> Self {
        iter.fold(AccessTrace::new(), |mut acc, t| {
            acc += t;
            acc
        })
    }
}

impl std::iter::Sum for AccessTrace {
    fn sum<I: Iterator<Item = AccessTrace>>(iter: I) -> Self {
        iter.fold(AccessTrace::new(), |mut acc, t| {
            acc += &t;
            acc
        })
    }
}
