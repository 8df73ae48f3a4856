//! Functional convolutional encoding.
//!
//! Only kernel weights are stored. Connectivity comes from address arithmetic:
//! forward `post = pre + pos`, reverse `pre = post - pos`, with centered offsets
//! `pos in [-k/2, k/2]`, same padding and stride 1. Candidates that fall outside the
//! layer are rejected by a validity check before any memory access.
//!
//! Neuron ids are channel-major: `id = (ch * in_h + r) * in_w + c`.

use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::matrix::SynapseMatrix;
use crate::quant::{code_value, weight_code};
use crate::trace::{AccessTrace, BankKind, BankSpec};
use crate::Scalar;

use super::{check_bits, CsrStore, Lookup, Scheme, StoreError, SynapseStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub c_in: usize,
    pub c_out: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NeuronCoord {
    pub r: usize,
    pub c: usize,
    pub ch: usize,
}

/// Kernel word selector. Offsets are signed and centered on the kernel middle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KernelIndex {
    pub ic: usize,
    pub oc: usize,
    pub pos_r: isize,
    pub pos_c: isize,
}

/// One valid connection: the neuron on the other side and the kernel word it uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConvLink {
    pub neuron: NeuronCoord,
    pub kernel: KernelIndex,
}

impl ConvGeometry {
    pub fn new(in_h: usize, in_w: usize, k_h: usize, k_w: usize, c_in: usize, c_out: usize) -> Result<Self, StoreError> {
        let g = Self { in_h, in_w, k_h, k_w, c_in, c_out };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if [self.in_h, self.in_w, self.k_h, self.k_w, self.c_in, self.c_out].contains(&0) {
            return Err(StoreError::EmptyGeometry);
        }
        if self.k_h.is_multiple_of(2) || self.k_w.is_multiple_of(2) {
            return Err(StoreError::EvenKernel { k_h: self.k_h, k_w: self.k_w });
        }
        Ok(())
    }

    pub fn half_h(&self) -> isize {
        (self.k_h / 2) as isize
    }

    pub fn half_w(&self) -> isize {
        (self.k_w / 2) as isize
    }

    pub fn n_pre(&self) -> usize {
        self.in_h * self.in_w * self.c_in
    }

    /// Same padding keeps the spatial extent, so only the channel count changes.
    pub fn n_post(&self) -> usize {
        self.in_h * self.in_w * self.c_out
    }

    pub fn kernel_len(&self) -> usize {
        self.c_in * self.c_out * self.k_h * self.k_w
    }

    /// Address evaluations per forward lookup.
    pub fn forward_candidates(&self) -> u64 {
        (self.k_h * self.k_w * self.c_out) as u64
    }

    /// Address evaluations per reverse lookup.
    pub fn reverse_candidates(&self) -> u64 {
        (self.k_h * self.k_w * self.c_in) as u64
    }

    /// Number of valid (pre, post) connections.
    pub fn connection_count(&self) -> u64 {
        let valid = |extent: usize, half: isize| -> u64 {
            (-half..=half).map(|d| extent.saturating_sub(d.unsigned_abs()) as u64).sum()
        };
        valid(self.in_h, self.half_h()) * valid(self.in_w, self.half_w()) * (self.c_in * self.c_out) as u64
    }

    pub fn pre_id(&self, n: NeuronCoord) -> usize {
        (n.ch * self.in_h + n.r) * self.in_w + n.c
    }

    pub fn post_id(&self, n: NeuronCoord) -> usize {
        self.pre_id(n)
    }

    pub fn coord(&self, id: usize) -> NeuronCoord {
        let c = id % self.in_w;
        let rest = id / self.in_w;
        NeuronCoord { r: rest % self.in_h, c, ch: rest / self.in_h }
    }

    pub fn kernel_offset(&self, k: KernelIndex) -> usize {
        let kr = (k.pos_r + self.half_h()) as usize;
        let kc = (k.pos_c + self.half_w()) as usize;
        ((k.ic * self.c_out + k.oc) * self.k_h + kr) * self.k_w + kc
    }

    fn check_coord(&self, n: NeuronCoord, channels: usize) -> Result<(), StoreError> {
        if n.r >= self.in_h || n.c >= self.in_w || n.ch >= channels {
            return Err(StoreError::CoordOutOfRange { r: n.r, c: n.c, ch: n.ch });
        }
        Ok(())
    }

    fn shifted(&self, r: usize, c: usize, dr: isize, dc: isize) -> Option<(usize, usize)> {
        let r = r as isize + dr;
        let c = c as isize + dc;
        let inside = (0..self.in_h as isize).contains(&r) && (0..self.in_w as isize).contains(&c);
        inside.then_some((r as usize, c as usize))
    }
}

/// Valid postsynaptic targets of `pre`. Each of the `k_h * k_w * c_out` candidates costs one
/// logic evaluation whether or not it passes the bounds check.
pub fn conv_forward_addresses(g: &ConvGeometry, pre: NeuronCoord) -> Result<Vec<ConvLink>, StoreError> {
    g.check_coord(pre, g.c_in)?;
    let mut out = Vec::with_capacity(g.forward_candidates() as usize);
    for oc in 0..g.c_out {
        for pos_r in -g.half_h()..=g.half_h() {
            for pos_c in -g.half_w()..=g.half_w() {
                if let Some((r, c)) = g.shifted(pre.r, pre.c, pos_r, pos_c) {
                    out.push(ConvLink {
                        neuron: NeuronCoord { r, c, ch: oc },
                        kernel: KernelIndex { ic: pre.ch, oc, pos_r, pos_c },
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Valid presynaptic sources of `post`, from `k_h * k_w * c_in` candidates.
pub fn conv_reverse_addresses(g: &ConvGeometry, post: NeuronCoord) -> Result<Vec<ConvLink>, StoreError> {
    g.check_coord(post, g.c_out)?;
    let mut out = Vec::with_capacity(g.reverse_candidates() as usize);
    for ic in 0..g.c_in {
        for pos_r in -g.half_h()..=g.half_h() {
            for pos_c in -g.half_w()..=g.half_w() {
                if let Some((r, c)) = g.shifted(post.r, post.c, -pos_r, -pos_c) {
                    out.push(ConvLink {
                        neuron: NeuronCoord { r, c, ch: ic },
                        kernel: KernelIndex { ic, oc: post.ch, pos_r, pos_c },
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalStore<T> {
    geometry: ConvGeometry,
    b_w: u32,
    codes: Vec<i32>,
    _scalar: PhantomData<fn() -> T>,
}

impl<T: Scalar> FunctionalStore<T> {
    /// `kernel` is laid out as `[ic][oc][k_h][k_w]`.
    pub fn build(g: ConvGeometry, kernel: &[T], b_w: u32) -> Result<Self, StoreError> {
        g.validate()?;
        check_bits(b_w)?;
        if kernel.len() != g.kernel_len() {
            return Err(StoreError::KernelLength { expected: g.kernel_len(), got: kernel.len() });
        }
        let codes = kernel.iter().map(|&w| weight_code(w, b_w)).collect();
        Ok(Self { geometry: g, b_w, codes, _scalar: PhantomData })
    }

    /// A fully connected `n_pre x n_post` layer as a 1x1 convolution over a 1x1 image:
    /// every neuron is a channel and the kernel is the row-major weight matrix.
    pub fn fully_connected(n_pre: usize, n_post: usize, weights: &[T], b_w: u32) -> Result<Self, StoreError> {
        Self::build(ConvGeometry::new(1, 1, 1, 1, n_pre, n_post)?, weights, b_w)
    }

    pub(crate) fn from_codes(geometry: ConvGeometry, b_w: u32, codes: Vec<i32>) -> Self {
        Self { geometry, b_w, codes, _scalar: PhantomData }
    }

    pub(crate) fn codes(&self) -> &[i32] {
        &self.codes
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geometry
    }

    pub fn kernel(&self) -> Vec<T> {
        self.codes.iter().map(|&k| code_value(k, self.b_w)).collect()
    }

    fn bank(&self) -> BankSpec {
        BankSpec::new(BankKind::Weight, self.codes.len() as u64 * self.b_w as u64, self.b_w)
    }

    fn kernel_for(&self, pre: usize, post: usize) -> Result<usize, StoreError> {
        let g = &self.geometry;
        if pre >= g.n_pre() {
            return Err(StoreError::PreOutOfRange { index: pre, n: g.n_pre() });
        }
        if post >= g.n_post() {
            return Err(StoreError::PostOutOfRange { index: post, n: g.n_post() });
        }
        let (a, b) = (g.coord(pre), g.coord(post));
        let pos_r = b.r as isize - a.r as isize;
        let pos_c = b.c as isize - a.c as isize;
        if pos_r.abs() > g.half_h() || pos_c.abs() > g.half_w() {
            return Err(StoreError::NoSynapse { pre, post });
        }
        Ok(g.kernel_offset(KernelIndex { ic: a.ch, oc: b.ch, pos_r, pos_c }))
    }

    /// Dense connectivity matrix of the equivalent convolution.
    pub fn materialize(&self) -> SynapseMatrix<T> {
        self.decode()
    }

    /// PB-CSR encoding of the same connectivity, built row by row from the forward
    /// address logic without a dense intermediate.
    pub fn to_csr(&self) -> CsrStore<T> {
        let g = &self.geometry;
        let mut row_ptr = Vec::with_capacity(g.n_pre() + 1);
        let mut col_idx = Vec::with_capacity(g.connection_count() as usize);
        let mut codes = Vec::with_capacity(g.connection_count() as usize);
        row_ptr.push(0);
        let mut row = Vec::new();
        for pre in 0..g.n_pre() {
            row.clear();
            for link in conv_forward_addresses(g, g.coord(pre)).expect("coordinate in range") {
                row.push((g.post_id(link.neuron) as u32, self.codes[g.kernel_offset(link.kernel)]));
            }
            row.sort_unstable_by_key(|e| e.0);
            for &(j, k) in &row {
                col_idx.push(j);
                codes.push(k);
            }
            row_ptr.push(col_idx.len() as u64);
        }
        CsrStore::from_parts(g.n_pre(), g.n_post(), self.b_w, row_ptr, col_idx, codes)
            .expect("convolution rows are sorted and in range")
    }
}

impl<T: Scalar> SynapseStore<T> for FunctionalStore<T> {
    fn scheme(&self) -> Scheme {
        Scheme::Functional
    }

    fn n_pre(&self) -> usize {
        self.geometry.n_pre()
    }

    fn n_post(&self) -> usize {
        self.geometry.n_post()
    }

    fn weight_bits(&self) -> u32 {
        self.b_w
    }

    fn banks(&self) -> Vec<BankSpec> {
        vec![self.bank()]
    }

    /// Every connection is updated separately, so shared kernel words see one write per use.
    fn synapse_count(&self) -> u64 {
        self.geometry.connection_count()
    }

    fn forward_lookup(&self, pre: usize) -> Result<Lookup<T>, StoreError> {
        let g = &self.geometry;
        if pre >= g.n_pre() {
            return Err(StoreError::PreOutOfRange { index: pre, n: g.n_pre() });
        }
        let links = conv_forward_addresses(g, g.coord(pre))?;
        let mut t = self.empty_trace();
        t.logic(g.forward_candidates()).read(self.bank(), links.len() as u64);
        let entries = links
            .into_iter()
            .map(|l| (g.post_id(l.neuron), code_value(self.codes[g.kernel_offset(l.kernel)], self.b_w)))
            .collect();
        Ok((entries, t))
    }

    fn reverse_lookup(&self, post: usize) -> Result<Lookup<T>, StoreError> {
        let g = &self.geometry;
        if post >= g.n_post() {
            return Err(StoreError::PostOutOfRange { index: post, n: g.n_post() });
        }
        let links = conv_reverse_addresses(g, g.coord(post))?;
        let mut t = self.empty_trace();
        t.logic(g.reverse_candidates()).read(self.bank(), links.len() as u64);
        let mut entries: Vec<(usize, T)> = links
            .into_iter()
            .map(|l| (g.pre_id(l.neuron), code_value(self.codes[g.kernel_offset(l.kernel)], self.b_w)))
            .collect();
        entries.sort_by_key(|e| e.0);
        Ok((entries, t))
    }

    /// One address evaluation locates the kernel word; the write then affects every
    /// connection sharing it.
    fn write_weight(&mut self, pre: usize, post: usize, value: T) -> Result<AccessTrace, StoreError> {
        self.put_weight(pre, post, value)?;
        let mut t = self.empty_trace();
        t.logic(1).write(self.bank(), 1);
        Ok(t)
    }

    fn put_weight(&mut self, pre: usize, post: usize, value: T) -> Result<(), StoreError> {
        let k = self.kernel_for(pre, post)?;
        self.codes[k] = weight_code(value, self.b_w);
        Ok(())
    }

    fn forward_pass_trace(&self) -> AccessTrace {
        let g = &self.geometry;
        let mut t = self.empty_trace();
        t.logic(g.n_pre() as u64 * g.forward_candidates())
            .read(self.bank(), g.connection_count());
        t
    }

    fn reverse_pass_trace(&self) -> AccessTrace {
        let g = &self.geometry;
        let mut t = self.empty_trace();
        t.logic(g.n_post() as u64 * g.reverse_candidates())
            .read(self.bank(), g.connection_count());
        t
    }
}
