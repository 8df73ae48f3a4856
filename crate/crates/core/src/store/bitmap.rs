//! Pointer-based bitmap (PB-BMP).
//!
//! Each row has a presence bitmap split into `w_word`-bit words and a pointer to the
//! first of its packed weights. The weight of `(i, j)` sits at
//! `row_ptr[i] + rank_i(j)`, where `rank_i(j)` counts the set bits of row `i` below `j`.

use std::marker::PhantomData;

use crate::matrix::SynapseMatrix;
use crate::quant::{code_value, weight_code};
use crate::trace::{AccessTrace, BankKind, BankSpec};
use crate::Scalar;

use super::{ceil_log2, check_bits, Lookup, Scheme, StoreError, SynapseStore};

pub const DEFAULT_BITMAP_WORD: u32 = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct BitmapStore<T> {
    n_pre: usize,
    n_post: usize,
    b_w: u32,
    w_word: u32,
    row_ptr: Vec<u64>,
    /// `n_pre * words_per_row` words; only the low `w_word` bits are used.
    bitmap: Vec<u64>,
    codes: Vec<i32>,
    _scalar: PhantomData<fn() -> T>,
}

fn check_word(w_word: u32) -> Result<(), StoreError> {
    if (1..=64).contains(&w_word) {
        Ok(())
    } else {
        Err(StoreError::WordWidth(w_word))
    }
}

impl<T: Scalar> BitmapStore<T> {
    pub fn build(m: &SynapseMatrix<T>, b_w: u32) -> Result<Self, StoreError> {
        Self::build_with_word(m, b_w, DEFAULT_BITMAP_WORD)
    }

    pub fn build_with_word(m: &SynapseMatrix<T>, b_w: u32, w_word: u32) -> Result<Self, StoreError> {
        check_bits(b_w)?;
        check_word(w_word)?;
        let (n_pre, n_post) = (m.n_pre(), m.n_post());
        let wpr = n_post.div_ceil(w_word as usize);
        let mut row_ptr = Vec::with_capacity(n_pre);
        let mut bitmap = vec![0u64; n_pre * wpr];
        let mut codes = Vec::with_capacity(m.nnz());
        for i in 0..n_pre {
            row_ptr.push(codes.len() as u64);
            for j in 0..n_post {
                if m.has_synapse(i, j) {
                    bitmap[i * wpr + j / w_word as usize] |= 1 << (j % w_word as usize);
                    codes.push(weight_code(m.weight(i, j), b_w));
                }
            }
        }
        Ok(Self { n_pre, n_post, b_w, w_word, row_ptr, bitmap, codes, _scalar: PhantomData })
    }

    /// Assembles a store from raw memories, checking every structural invariant.
    pub fn from_parts(
        n_pre: usize,
        n_post: usize,
        b_w: u32,
        w_word: u32,
        row_ptr: Vec<u64>,
        bitmap: Vec<u64>,
        codes: Vec<i32>,
    ) -> Result<Self, StoreError> {
        check_bits(b_w)?;
        check_word(w_word)?;
        let wpr = n_post.div_ceil(w_word as usize);
        if row_ptr.len() != n_pre || bitmap.len() != n_pre * wpr {
            return Err(StoreError::MalformedRow { row: 0, reason: "memory sizes do not match the dimensions" });
        }
        let store = Self { n_pre, n_post, b_w, w_word, row_ptr, bitmap, codes, _scalar: PhantomData };
        let mut offset = 0u64;
        for i in 0..n_pre {
            if store.row_ptr[i] != offset {
                return Err(StoreError::MalformedRow { row: i, reason: "row pointer differs from the running popcount" });
            }
            for (w, &word) in store.row_words(i).iter().enumerate() {
                let used = (n_post - w * w_word as usize).min(w_word as usize);
                if used < 64 && word >> used != 0 {
                    return Err(StoreError::MalformedRow { row: i, reason: "bits set past the last column" });
                }
            }
            offset += store.row_popcount(i);
        }
        if offset != store.codes.len() as u64 {
            return Err(StoreError::MalformedRow { row: n_pre, reason: "weight count differs from the bitmap popcount" });
        }
        Ok(store)
    }

    pub fn nnz(&self) -> usize {
        self.codes.len()
    }

    pub fn word_bits(&self) -> u32 {
        self.w_word
    }

    pub fn words_per_row(&self) -> usize {
        self.n_post.div_ceil(self.w_word as usize)
    }

    pub fn row_ptr(&self) -> &[u64] {
        &self.row_ptr
    }

    pub fn bitmap_words(&self) -> &[u64] {
        &self.bitmap
    }

    pub(crate) fn codes(&self) -> &[i32] {
        &self.codes
    }

    /// Row pointer width `ceil(log2(nnz + 1))`.
    pub fn pointer_bits(&self) -> u32 {
        ceil_log2(self.nnz() as u64 + 1)
    }

    fn row_words(&self, pre: usize) -> &[u64] {
        let wpr = self.words_per_row();
        &self.bitmap[pre * wpr..(pre + 1) * wpr]
    }

    fn row_popcount(&self, pre: usize) -> u64 {
        self.row_words(pre).iter().map(|w| w.count_ones() as u64).sum()
    }

    fn word_of(&self, post: usize) -> usize {
        post / self.w_word as usize
    }

    pub fn is_set(&self, pre: usize, post: usize) -> bool {
        let w = self.w_word as usize;
        (self.row_words(pre)[post / w] >> (post % w)) & 1 == 1
    }

    /// Set bits of row `pre` strictly below column `post`.
    pub fn rank(&self, pre: usize, post: usize) -> u64 {
        let w = self.w_word as usize;
        let words = self.row_words(pre);
        let full: u64 = words[..post / w].iter().map(|x| x.count_ones() as u64).sum();
        let low = words[post / w] & ((1u64 << (post % w)) - 1);
        full + low.count_ones() as u64
    }

    fn row_ptr_bank(&self) -> BankSpec {
        let p = self.pointer_bits();
        BankSpec::new(BankKind::RowPtr, self.n_pre as u64 * p as u64, p)
    }

    fn bitmap_bank(&self) -> BankSpec {
        BankSpec::new(BankKind::Bitmap, self.bitmap.len() as u64 * self.w_word as u64, self.w_word)
    }

    fn weight_bank_spec(&self) -> BankSpec {
        BankSpec::new(BankKind::Weight, self.nnz() as u64 * self.b_w as u64, self.b_w)
    }

    fn locate(&self, pre: usize, post: usize) -> Result<usize, StoreError> {
        if pre >= self.n_pre {
            return Err(StoreError::PreOutOfRange { index: pre, n: self.n_pre });
        }
        if post >= self.n_post {
            return Err(StoreError::PostOutOfRange { index: post, n: self.n_post });
        }
        if !self.is_set(pre, post) {
            return Err(StoreError::NoSynapse { pre, post });
        }
        Ok((self.row_ptr[pre] + self.rank(pre, post)) as usize)
    }
}

impl<T: Scalar> SynapseStore<T> for BitmapStore<T> {
    fn scheme(&self) -> Scheme {
        Scheme::Bitmap
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
        vec![self.row_ptr_bank(), self.bitmap_bank(), self.weight_bank_spec()]
    }

    fn synapse_count(&self) -> u64 {
        self.nnz() as u64
    }

    fn forward_lookup(&self, pre: usize) -> Result<Lookup<T>, StoreError> {
        if pre >= self.n_pre {
            return Err(StoreError::PreOutOfRange { index: pre, n: self.n_pre });
        }
        let w = self.w_word as usize;
        let mut slot = self.row_ptr[pre] as usize;
        let mut entries = Vec::new();
        for (k, &word) in self.row_words(pre).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                entries.push((k * w + b, code_value(self.codes[slot], self.b_w)));
                slot += 1;
                bits &= bits - 1;
            }
        }
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), 1)
            .read(self.bitmap_bank(), self.words_per_row() as u64)
            .read(self.weight_bank_spec(), entries.len() as u64);
        Ok((entries, t))
    }

    fn reverse_lookup(&self, post: usize) -> Result<Lookup<T>, StoreError> {
        if post >= self.n_post {
            return Err(StoreError::PostOutOfRange { index: post, n: self.n_post });
        }
        let mut entries = Vec::new();
        for pre in 0..self.n_pre {
            if self.is_set(pre, post) {
                let slot = (self.row_ptr[pre] + self.rank(pre, post)) as usize;
                entries.push((pre, code_value(self.codes[slot], self.b_w)));
            }
        }
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), self.n_pre as u64)
            .read(self.bitmap_bank(), self.n_pre as u64 * (self.word_of(post) as u64 + 1))
            .read(self.weight_bank_spec(), entries.len() as u64);
        Ok((entries, t))
    }

    fn write_weight(&mut self, pre: usize, post: usize, value: T) -> Result<AccessTrace, StoreError> {
        let slot = self.locate(pre, post)?;
        self.codes[slot] = weight_code(value, self.b_w);
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), 1)
            .read(self.bitmap_bank(), self.word_of(post) as u64 + 1)
            .write(self.weight_bank_spec(), 1);
        Ok(t)
    }

    fn put_weight(&mut self, pre: usize, post: usize, value: T) -> Result<(), StoreError> {
        let slot = self.locate(pre, post)?;
        self.codes[slot] = weight_code(value, self.b_w);
        Ok(())
    }

    fn forward_pass_trace(&self) -> AccessTrace {
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), self.n_pre as u64)
            .read(self.bitmap_bank(), self.bitmap.len() as u64)
            .read(self.weight_bank_spec(), self.nnz() as u64);
        t
    }

    fn reverse_pass_trace(&self) -> AccessTrace {
        let n_pre = self.n_pre as u64;
        let wpr = self.words_per_row() as u64;
        let w = self.w_word as u64;
        let n_post = self.n_post as u64;
        // Columns in word k need k + 1 words; the last word may be partially used.
        let bitmap_reads: u64 = (0..wpr).map(|k| (k + 1) * (n_post - k * w).min(w)).sum::<u64>() * n_pre;
        let mut t = self.empty_trace();
        t.read(self.row_ptr_bank(), n_pre * n_post)
            .read(self.bitmap_bank(), bitmap_reads)
            .read(self.weight_bank_spec(), self.nnz() as u64);
        t
    }
}
