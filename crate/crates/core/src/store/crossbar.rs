//! Crossbar (CB): every potential synapse has a word at address `pre * n_post + post`.

use std::marker::PhantomData;

use crate::matrix::SynapseMatrix;
use crate::quant::{code_value, weight_code};
use crate::trace::{AccessTrace, BankKind, BankSpec};
use crate::Scalar;

use super::{check_bits, Lookup, Scheme, StoreError, SynapseStore};

#[derive(Clone, Debug, PartialEq)]
pub struct CrossbarStore<T> {
    n_pre: usize,
    n_post: usize,
    b_w: u32,
    codes: Vec<i32>,
    _scalar: PhantomData<fn() -> T>,
}

fn weight_bank(n_pre: usize, n_post: usize, b_w: u32) -> BankSpec {
    BankSpec::new(BankKind::Weight, (n_pre * n_post) as u64 * b_w as u64, b_w)
}

/// Forward pass trace of an `n_pre x n_post` crossbar without materializing it.
pub fn crossbar_forward_pass(n_pre: usize, n_post: usize, b_w: u32) -> AccessTrace {
    let bank = weight_bank(n_pre, n_post, b_w);
    let mut t = AccessTrace::with_banks([bank]);
    t.read(bank, (n_pre * n_post) as u64);
    t
}

/// Backward pass trace (reverse reads plus one write per slot) of an `n_pre x n_post` crossbar.
pub fn crossbar_backward_pass(n_pre: usize, n_post: usize, b_w: u32) -> AccessTrace {
    let bank = weight_bank(n_pre, n_post, b_w);
    let slots = (n_pre * n_post) as u64;
    let mut t = AccessTrace::with_banks([bank]);
    t.read(bank, slots).write(bank, slots);
    t
}

impl<T: Scalar> CrossbarStore<T> {
    /// Absent synapses are stored as zero words.
    pub fn build(m: &SynapseMatrix<T>, b_w: u32) -> Result<Self, StoreError> {
        check_bits(b_w)?;
        Ok(Self {
            n_pre: m.n_pre(),
            n_post: m.n_post(),
            b_w,
            codes: m.weights().iter().map(|&w| weight_code(w, b_w)).collect(),
            _scalar: PhantomData,
        })
    }

    pub(crate) fn from_codes(n_pre: usize, n_post: usize, b_w: u32, codes: Vec<i32>) -> Self {
        Self { n_pre, n_post, b_w, codes, _scalar: PhantomData }
    }

    pub(crate) fn codes(&self) -> &[i32] {
        &self.codes
    }

    #[inline]
    pub fn address(&self, pre: usize, post: usize) -> usize {
        pre * self.n_post + post
    }

    fn bank(&self) -> BankSpec {
        weight_bank(self.n_pre, self.n_post, self.b_w)
    }

    fn check(&self, pre: usize, post: usize) -> Result<(), StoreError> {
        if pre >= self.n_pre {
            return Err(StoreError::PreOutOfRange { index: pre, n: self.n_pre });
        }
        if post >= self.n_post {
            return Err(StoreError::PostOutOfRange { index: post, n: self.n_post });
        }
        Ok(())
    }
}

impl<T: Scalar> SynapseStore<T> for CrossbarStore<T> {
    fn scheme(&self) -> Scheme {
        Scheme::Crossbar
    }

    fn n_pre(&self) -> usize {
        self.n_pre
    }

    fn n_post(&self) -> usize {
        self.n_post
    }

    fn weight_bits(&self) -> u32 {
        self.b_w
    }

    fn banks(&self) -> Vec<BankSpec> {
        vec![self.bank()]
    }

    fn synapse_count(&self) -> u64 {
        (self.n_pre * self.n_post) as u64
    }

    fn forward_lookup(&self, pre: usize) -> Result<Lookup<T>, StoreError> {
        if pre >= self.n_pre {
            return Err(StoreError::PreOutOfRange { index: pre, n: self.n_pre });
        }
        let row = &self.codes[pre * self.n_post..(pre + 1) * self.n_post];
        let entries = row.iter().enumerate().map(|(j, &c)| (j, code_value(c, self.b_w))).collect();
        let mut t = self.empty_trace();
        t.read(self.bank(), self.n_post as u64);
        Ok((entries, t))
    }

    fn reverse_lookup(&self, post: usize) -> Result<Lookup<T>, StoreError> {
        if post >= self.n_post {
            return Err(StoreError::PostOutOfRange { index: post, n: self.n_post });
        }
        let entries = (0..self.n_pre)
            .map(|i| (i, code_value(self.codes[self.address(i, post)], self.b_w)))
            .collect();
        let mut t = self.empty_trace();
        t.read(self.bank(), self.n_pre as u64);
        Ok((entries, t))
    }

    fn write_weight(&mut self, pre: usize, post: usize, value: T) -> Result<AccessTrace, StoreError> {
        self.put_weight(pre, post, value)?;
        let mut t = self.empty_trace();
        t.write(self.bank(), 1);
        Ok(t)
    }

    fn put_weight(&mut self, pre: usize, post: usize, value: T) -> Result<(), StoreError> {
        self.check(pre, post)?;
        let a = self.address(pre, post);
        self.codes[a] = weight_code(value, self.b_w);
        Ok(())
    }

    fn forward_pass_trace(&self) -> AccessTrace {
        crossbar_forward_pass(self.n_pre, self.n_post, self.b_w)
    }

    fn reverse_pass_trace(&self) -> AccessTrace {
        let mut t = self.empty_trace();
        t.read(self.bank(), (self.n_pre * self.n_post) as u64);
        t
    }
}
