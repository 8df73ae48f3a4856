//! Pointer-based compressed sparse row (PB-CSR).
//!
//! `row_ptr[i]..row_ptr[i + 1]` delimits row `i` in the column-index and weight
//! memories. Reverse lookups have no transpose table and scan both index memories.

use std::marker::PhantomData;

use crate::matrix::SynapseMatrix;
use crate::quant::{code_value, weight_code};
use crate::trace::{AccessTrace, BankKind, BankSpec};
use crate::Scalar;

use super::{ceil_log2, check_bits, Lookup, Scheme, StoreError, SynapseStore};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrStore<T> {
    n_pre: usize,
    n_post: usize,
    b_w: u32,
    row_ptr: Vec<u64>,
    col_idx: Vec<u32>,
    codes: Vec<i32>,
    _scalar: PhantomData<fn() -> T>,
}

impl<T: Scalar> CsrStore<T> {
    pub fn build(m: &SynapseMatrix<T>, b_w: u32) -> Result<Self, StoreError> {
        check_bits(b_w)?;
        let (n_pre, n_post) = (m.n_pre(), m.n_post());
        let mut row_ptr = Vec::with_capacity(n_pre + 1);
        let mut col_idx = Vec::with_capacity(m.nnz());
        let mut codes = Vec::with_capacity(m.nnz());
        row_ptr.push(0);
        for i in 0..n_pre {
            for j in 0..n_post {
                if m.has_synapse(i, j) {
                    col_idx.push(j as u32);
                    codes.push(weight_code(m.weight(i, j), b_w));
                }
            }
            row_ptr.push(col_idx.len() as u64);
        }
        Ok(Self { n_pre, n_post, b_w, row_ptr, col_idx, codes, _scalar: PhantomData })
    }

    /// Assembles a store from raw memories, checking every structural invariant.
    pub fn from_parts(
        n_pre: usize,
        n_post: usize,
        b_w: u32,
        row_ptr: Vec<u64>,
        col_idx: Vec<u32>,
        codes: Vec<i32>,
    ) -> Result<Self, StoreError> {
        check_bits(b_w)?;
        let malformed = |row, reason| Err(StoreError::MalformedRow { row, reason });
        if row_ptr.len() != n_pre + 1 || row_ptr[0] != 0 {
            return malformed(0, "row pointer table has the wrong length or a nonzero start");
        }
        if col_idx.len() != codes.len() || row_ptr[n_pre] != col_idx.len() as u64 {
            return malformed(n_pre, "last row pointer differs from the nonzero count");
        }
        for i in 0..n_pre {
            if row_ptr[i + 1] < row_ptr[i] {
                return malformed(i, "row pointers decrease");
            }
            let row = &col_idx[row_ptr[i] as usize..row_ptr[i + 1] as usize];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return malformed(i, "column indices are not strictly increasing");
            }
            if row.last().is_some_and(|&j| j as usize >= n_post) {
                return malformed(i, "column index out of range");
            }
        }
        Ok(Self { n_pre, n_post, b_w, row_ptr, col_idx, codes, _scalar: PhantomData })
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[u64] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub(crate) fn codes(&self) -> &[i32] {
        &self.codes
    }

    /// Row pointer width `ceil(log2(nnz + 1))`.
    pub fn pointer_bits(&self) -> u32 {
        ceil_log2(self.nnz() as u64 + 1)
    }

    /// Column index width `ceil(log2(n_post))`.
    pub fn column_bits(&self) -> u32 {
        ceil_log2(self.n_post as u64)
    }

    fn row_ptr_bank(&self) -> BankSpec {
        let p = self.pointer_bits();
        BankSpec::new(BankKind::RowPtr, (self.n_pre as u64 + 1) * p as u64, p)
    }

    fn col_bank(&self) -> BankSpec {
        let c = self.column_bits();
        BankSpec::new(BankKind::ColIdx, self.nnz() as u64 * c as u64, c)
    }

    fn weight_bank_spec(&self) -> BankSpec {
        BankSpec::new(BankKind::Weight, self.nnz() as u64 * self.b_w as u64, self.b_w)
    }

    fn row(&self, pre: usize) -> std::ops::Range<usize> {
        self.row_ptr[pre] as usize..self.row_ptr[pre + 1] as usize
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

    /// Slot of `(pre, post)` and the number of column indices scanned to find it.
    fn locate(&self, pre: usize, post: usize) -> Result<(usize, u64), StoreError> {
        self.check(pre, post)?;
        let range = self.row(pre);
        let start = range.start;
        for (k, &j) in self.col_idx[range].iter().enumerate() {
            if j as usize == post {
                return Ok((start + k, k as u64 + 1));
            }
            if j as usize > post {
                break;
            }
        }
        Err(StoreError::NoSynapse { pre, post })
    }
}

impl<T: Scalar> SynapseStore<T> for CsrStore<T> {
    fn scheme(&self) -> Scheme {
        Scheme::Csr
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
        vec![self.row_ptr_bank(), self.col_bank(), self.weight_bank_spec()]
    }

    fn synapse_count(&self) -> u64 {
        self.nnz() as u64
    }

    fn forward_lookup(&self, pre: usize) -> Result<Lookup<T>, StoreError> {
        if pre >= self.n_pre {
            return Err(StoreError::PreOutOfRange { index: pre, n: self.n_pre });
        }
        let range = self.row(pre);
        let k = range.len() as u64;
        let entries = range
            .map(|s| (self.col_idx[s] as usize, code_value(self.codes[s], self.b_w)))
            .collect();
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), 2)
            .read(self.col_bank(), k)
            .read(self.weight_bank_spec(), k);
        Ok((entries, t))
    }

    fn reverse_lookup(&self, post: usize) -> Result<Lookup<T>, StoreError> {
        if post >= self.n_post {
            return Err(StoreError::PostOutOfRange { index: post, n: self.n_post });
        }
        let mut entries = Vec::new();
        for pre in 0..self.n_pre {
            for s in self.row(pre) {
                if self.col_idx[s] as usize == post {
                    entries.push((pre, code_value(self.codes[s], self.b_w)));
                }
            }
        }
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), self.n_pre as u64 + 1)
            .read(self.col_bank(), self.nnz() as u64)
            .read(self.weight_bank_spec(), entries.len() as u64);
        Ok((entries, t))
    }

    fn write_weight(&mut self, pre: usize, post: usize, value: T) -> Result<AccessTrace, StoreError> {
        let (slot, scanned) = self.locate(pre, post)?;
        self.codes[slot] = weight_code(value, self.b_w);
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), 2)
            .read(self.col_bank(), scanned)
            .write(self.weight_bank_spec(), 1);
        Ok(t)
    }

    fn put_weight(&mut self, pre: usize, post: usize, value: T) -> Result<(), StoreError> {
        let (slot, _) = self.locate(pre, post)?;
        self.codes[slot] = weight_code(value, self.b_w);
        Ok(())
    }

    fn forward_pass_trace(&self) -> AccessTrace {
        let nnz = self.nnz() as u64;
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), 2 * self.n_pre as u64)
            .read(self.col_bank(), nnz)
            .read(self.weight_bank_spec(), nnz);
        t
    }

    fn reverse_pass_trace(&self) -> AccessTrace {
        let nnz = self.nnz() as u64;
        let scans = self.n_post as u64;
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), scans * (self.n_pre as u64 + 1))
            .read(self.col_bank(), scans * nnz)
            .read(self.weight_bank_spec(), nnz);
        t
    }
}
