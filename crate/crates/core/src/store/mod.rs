//! Synaptic connectivity and weight storage schemes.
//!
//! Every scheme answers forward lookups (all postsynaptic targets of a presynaptic
//! neuron), reverse lookups (all presynaptic sources of a postsynaptic neuron) and
//! weight writes, and returns the exact [`AccessTrace`] the modeled hardware performs.
//! Weight words hold signed fixed-point codes on the `sigma(b_w)` grid.
//!
//! Connectivity is fixed at build time; only weight values can change.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::SynapseMatrix;
use crate::quant::MAX_BITS;
use crate::trace::{AccessTrace, BankKind, BankSpec};
use crate::Scalar;

mod bitmap;
pub mod container;
mod crossbar;
mod csr;
mod functional;

pub use bitmap::{BitmapStore, DEFAULT_BITMAP_WORD};
pub use crossbar::{crossbar_backward_pass, crossbar_forward_pass, CrossbarStore};
pub use csr::CsrStore;
pub use functional::{
    conv_forward_addresses, conv_reverse_addresses, ConvGeometry, ConvLink, FunctionalStore, KernelIndex,
    NeuronCoord,
};

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("weight width {0} is outside 1..=32 bits")]
    BitWidth(u32),
    #[error("bitmap word width {0} is outside 1..=64 bits")]
    WordWidth(u32),
    #[error("presynaptic index {index} out of range (n_pre = {n})")]
    PreOutOfRange { index: usize, n: usize },
    #[error("postsynaptic index {index} out of range (n_post = {n})")]
    PostOutOfRange { index: usize, n: usize },
    #[error("no synapse between pre {pre} and post {post}; the structure is immutable")]
    NoSynapse { pre: usize, post: usize },
    #[error("kernel extents must be odd, got {k_h}x{k_w}")]
    EvenKernel { k_h: usize, k_w: usize },
    #[error("every convolution extent must be at least 1")]
    EmptyGeometry,
    #[error("coordinate ({r}, {c}, {ch}) is outside the layer")]
    CoordOutOfRange { r: usize, c: usize, ch: usize },
    #[error("kernel has {got} weights, geometry needs {expected}")]
    KernelLength { expected: usize, got: usize },
    #[error("row {row} is malformed: {reason}")]
    MalformedRow { row: usize, reason: &'static str },
}

/// Storage scheme tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "cb")]
    Crossbar,
    #[serde(rename = "pb-csr")]
    Csr,
    #[serde(rename = "pb-bmp")]
    Bitmap,
    #[serde(rename = "functional")]
    Functional,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap, Scheme::Functional];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Crossbar => "CB",
            Scheme::Csr => "PB-CSR",
            Scheme::Bitmap => "PB-BMP",
            Scheme::Functional => "Functional",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Scheme::Crossbar => 0,
            Scheme::Csr => 1,
            Scheme::Bitmap => 2,
            Scheme::Functional => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Scheme::ALL.into_iter().find(|s| s.tag() == tag)
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Scheme::Csr | Scheme::Bitmap)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cb" | "crossbar" => Ok(Scheme::Crossbar),
            "pb-csr" | "csr" => Ok(Scheme::Csr),
            "pb-bmp" | "bmp" | "bitmap" => Ok(Scheme::Bitmap),
            "functional" | "func" => Ok(Scheme::Functional),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

/// Bits needed to address `n` distinct values: `ceil(log2(n))`, zero for `n <= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

pub(crate) fn check_bits(b_w: u32) -> Result<(), StoreError> {
    if (1..=MAX_BITS).contains(&b_w) {
        Ok(())
    } else {
        Err(StoreError::BitWidth(b_w))
    }
}

/// Per-bank storage footprint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageBits {
    pub banks: Vec<(BankKind, u64)>,
}

impl StorageBits {
    pub fn total(&self) -> u64 {
        self.banks.iter().map(|(_, b)| b).sum()
    }

    pub fn bank(&self, kind: BankKind) -> u64 {
        self.banks.iter().filter(|(k, _)| *k == kind).map(|(_, b)| b).sum()
    }
}

/// `(index, weight)` pairs returned by a lookup together with the access trace it caused.
pub type Lookup<T> = (Vec<(usize, T)>, AccessTrace);

pub trait SynapseStore<T: Scalar>: Send + Sync {
    fn scheme(&self) -> Scheme;
    fn n_pre(&self) -> usize;
    fn n_post(&self) -> usize;
    fn weight_bits(&self) -> u32;

    /// Physical memories of the store.
    fn banks(&self) -> Vec<BankSpec>;

    /// Synapses that receive one weight update in a backward pass.
    fn synapse_count(&self) -> u64;

    /// All postsynaptic targets of `pre` with their weights.
    fn forward_lookup(&self, pre: usize) -> Result<Lookup<T>, StoreError>;

    /// All presynaptic sources of `post` with their weights.
    fn reverse_lookup(&self, post: usize) -> Result<Lookup<T>, StoreError>;

    /// Locates synapse `(pre, post)` and writes the quantized `value`.
    fn write_weight(&mut self, pre: usize, post: usize, value: T) -> Result<AccessTrace, StoreError>;

    /// Stores `value` without modeling memory traffic. Used for batched updates whose
    /// slot was already located by a lookup.
    fn put_weight(&mut self, pre: usize, post: usize, value: T) -> Result<(), StoreError>;

    fn weight_bank(&self) -> BankSpec {
        self.banks()
            .into_iter()
            .find(|b| b.kind == BankKind::Weight)
            .expect("every store has a weight bank")
    }

    fn storage(&self) -> StorageBits {
        StorageBits {
            banks: self.banks().iter().map(|b| (b.kind, b.capacity_bits)).collect(),
        }
    }

    fn storage_bits(&self) -> u64 {
        self.storage().total()
    }

    /// Zero trace listing every bank of the store.
    fn empty_trace(&self) -> AccessTrace {
        AccessTrace::with_banks(self.banks())
    }

    /// Forward lookups of every presynaptic neuron.
    fn forward_pass_trace(&self) -> AccessTrace {
        let mut t = self.empty_trace();
        for pre in 0..self.n_pre() {
            t += &self.forward_lookup(pre).expect("index in range").1;
        }
        t
    }

    /// Reverse lookups of every postsynaptic neuron.
    fn reverse_pass_trace(&self) -> AccessTrace {
        let mut t = self.empty_trace();
        for post in 0..self.n_post() {
            t += &self.reverse_lookup(post).expect("index in range").1;
        }
        t
    }

    /// One located write per synapse.
    fn update_trace(&self) -> AccessTrace {
        let mut t = self.empty_trace();
        t.write(self.weight_bank(), self.synapse_count());
        t
    }

    /// Reverse pass followed by a located write to every synapse.
    fn backward_pass_trace(&self) -> AccessTrace {
        self.reverse_pass_trace() + self.update_trace()
    }

    /// Batched reverse update: one reverse lookup, then `update(pre, old)` is written to every
    /// source of `post` with a single weight write each (the lookup already located the slots).
    fn reverse_update(
        &mut self,
        post: usize,
        update: &mut dyn FnMut(usize, T) -> T,
    ) -> Result<AccessTrace, StoreError> {
        let (entries, mut trace) = self.reverse_lookup(post)?;
        let bank = self.weight_bank();
        for (pre, old) in entries {
            self.put_weight(pre, post, update(pre, old))?;
            trace.write(bank, 1);
        }
        Ok(trace)
    }

    /// Dense matrix holding what the store encodes; the mask marks stored synapse slots.
    fn decode(&self) -> SynapseMatrix<T> {
        let (n_pre, n_post) = (self.n_pre(), self.n_post());
        let mut weights = vec![T::zero(); n_pre * n_post];
        let mut mask = vec![false; n_pre * n_post];
        for pre in 0..n_pre {
            for (post, w) in self.forward_lookup(pre).expect("index in range").0 {
                weights[pre * n_post + post] = w;
                mask[pre * n_post + post] = true;
            }
        }
        SynapseMatrix::new(n_pre, n_post, weights, mask).expect("shape matches")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(0), 0);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(128), 7);
        assert_eq!(ceil_log2(69_889), 17);
    }

    #[test]
    fn scheme_names_parse() {
        for s in Scheme::ALL {
            assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
            assert_eq!(Scheme::from_tag(s.tag()), Some(s));
        }
        assert!("dense".parse::<Scheme>().is_err());
    }
}
