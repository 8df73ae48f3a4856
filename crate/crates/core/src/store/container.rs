//! Little-endian binary container for built stores.
//!
//! ```text
//! magic      "SYNM"
//! version    u16
//! scheme     u8   (0 CB, 1 PB-CSR, 2 PB-BMP, 3 functional)
//! n_pre      u64
//! n_post     u64
//! b_w        u8
//! extra      PB-CSR: nnz u64 | PB-BMP: w_word u8, nnz u64
//!            | functional: in_h, in_w, k_h, k_w, c_in, c_out as u32
//! banks      u8
//! per bank   kind u8, capacity_bits u64, word_bits u8, entries u64, payload
//! ```
//!
//! Payload entries are u64 for row pointers and bitmap words, u32 for column
//! indices and i32 for weight codes.

use serde::Serialize;
use thiserror::Error;

use crate::trace::BankKind;
use crate::Scalar;

use super::{
    BitmapStore, ConvGeometry, CrossbarStore, CsrStore, FunctionalStore, Scheme, StoreError, SynapseStore,
};

pub const MAGIC: &[u8; 4] = b"SYNM";
pub const VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ContainerError {
    #[error("missing SYNM magic bytes")]
    Magic,
    #[error("unsupported container version {0}")]
    Version(u16),
    #[error("unknown scheme tag {0}")]
    Scheme(u8),
    #[error("unknown bank kind tag {0}")]
    BankKind(u8),
    #[error("container ends early at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the last bank")]
    Trailing(usize),
    #[error("bank layout does not match the scheme: {0}")]
    Layout(&'static str),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A built store of any scheme.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyStore<T> {
    Crossbar(CrossbarStore<T>),
    Csr(CsrStore<T>),
    Bitmap(BitmapStore<T>),
    Functional(FunctionalStore<T>),
}

impl<T: Scalar> AnyStore<T> {
    pub fn as_store(&self) -> &dyn SynapseStore<T> {
        match self {
            AnyStore::Crossbar(s) => s,
            AnyStore::Csr(s) => s,
            AnyStore::Bitmap(s) => s,
            AnyStore::Functional(s) => s,
        }
    }

    pub fn as_store_mut(&mut self) -> &mut dyn SynapseStore<T> {
        match self {
            AnyStore::Crossbar(s) => s,
            AnyStore::Csr(s) => s,
            AnyStore::Bitmap(s) => s,
            AnyStore::Functional(s) => s,
        }
    }
}

/// Human-readable description written next to a container.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoreSummary {
    pub scheme: Scheme,
    pub n_pre: usize,
    pub n_post: usize,
    pub density: f64,
    pub b_w: u32,
    pub banks: Vec<BankBits>,
    pub total_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BankBits {
    pub kind: BankKind,
    pub bits: u64,
}

pub fn summary<T: Scalar>(store: &dyn SynapseStore<T>) -> StoreSummary {
    let storage = store.storage();
    let slots = (store.n_pre() * store.n_post()) as f64;
    let stored = match store.scheme() {
        Scheme::Crossbar => store.decode().nnz() as u64,
        _ => store.synapse_count(),
    };
    StoreSummary {
        scheme: store.scheme(),
        n_pre: store.n_pre(),
        n_post: store.n_post(),
        density: if slots > 0.0 { stored as f64 / slots } else { 0.0 },
        b_w: store.weight_bits(),
        total_bits: storage.total(),
        banks: storage.banks.into_iter().map(|(kind, bits)| BankBits { kind, bits }).collect(),
    }
}

enum Payload<'a> {
    U64(&'a [u64]),
    U32(&'a [u32]),
    I32(&'a [i32]),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn bank<T: Scalar>(&mut self, store: &dyn SynapseStore<T>, kind: BankKind, payload: Payload<'_>) {
        let spec = store
            .banks()
            .into_iter()
            .find(|b| b.kind == kind)
            .expect("scheme has the bank");
        self.u8(kind.tag());
        self.u64(spec.capacity_bits);
        self.u8(spec.word_bits as u8);
        match payload {
            Payload::U64(v) => {
                self.u64(v.len() as u64);
                v.iter().for_each(|&x| self.u64(x));
            }
            Payload::U32(v) => {
                self.u64(v.len() as u64);
                v.iter().for_each(|&x| self.u32(x));
            }
            Payload::I32(v) => {
                self.u64(v.len() as u64);
                v.iter().for_each(|&x| self.u32(x as u32));
            }
        }
    }
}

pub fn encode<T: Scalar>(store: &AnyStore<T>) -> Vec<u8> {
    let s = store.as_store();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u8(s.scheme().tag());
    w.u64(s.n_pre() as u64);
    w.u64(s.n_post() as u64);
    w.u8(s.weight_bits() as u8);
    match store {
        AnyStore::Crossbar(cb) => {
            w.u8(1);
            w.bank(s, BankKind::Weight, Payload::I32(cb.codes()));
        }
        AnyStore::Csr(csr) => {
            w.u64(csr.nnz() as u64);
            w.u8(3);
            w.bank(s, BankKind::RowPtr, Payload::U64(csr.row_ptr()));
            w.bank(s, BankKind::ColIdx, Payload::U32(csr.col_idx()));
            w.bank(s, BankKind::Weight, Payload::I32(csr.codes()));
        }
        AnyStore::Bitmap(bmp) => {
            w.u8(bmp.word_bits() as u8);
            w.u64(bmp.nnz() as u64);
            w.u8(3);
            w.bank(s, BankKind::RowPtr, Payload::U64(bmp.row_ptr()));
            w.bank(s, BankKind::Bitmap, Payload::U64(bmp.bitmap_words()));
            w.bank(s, BankKind::Weight, Payload::I32(bmp.codes()));
        }
        AnyStore::Functional(f) => {
            let g = f.geometry();
            for x in [g.in_h, g.in_w, g.k_h, g.k_w, g.c_in, g.c_out] {
                w.u32(x as u32);
            }
            w.u8(1);
            w.bank(s, BankKind::Weight, Payload::I32(f.codes()));
        }
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(ContainerError::Truncated(self.bytes.len()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, ContainerError> {
        usize::try_from(self.u64()?).map_err(|_| ContainerError::Layout("length exceeds the address space"))
    }

    /// Bank header; returns the entry count after checking the expected kind.
    fn bank(&mut self, kind: BankKind) -> Result<usize, ContainerError> {
        let tag = self.u8()?;
        let got = BankKind::from_tag(tag).ok_or(ContainerError::BankKind(tag))?;
        if got != kind {
            return Err(ContainerError::Layout("unexpected bank order"));
        }
        self.u64()?;
        self.u8()?;
        let n = self.usize()?;
        let width = if matches!(kind, BankKind::RowPtr | BankKind::Bitmap) { 8 } else { 4 };
        if n.checked_mul(width).is_none_or(|b| b > self.bytes.len() - self.pos) {
            return Err(ContainerError::Truncated(self.bytes.len()));
        }
        Ok(n)
    }
    fn u64s(&mut self, kind: BankKind) -> Result<Vec<u64>, ContainerError> {
        let n = self.bank(kind)?;
        (0..n).map(|_| self.u64()).collect()
    }
    fn u32s(&mut self, kind: BankKind) -> Result<Vec<u32>, ContainerError> {
        let n = self.bank(kind)?;
        (0..n).map(|_| self.u32()).collect()
    }
    fn codes(&mut self) -> Result<Vec<i32>, ContainerError> {
        let n = self.bank(BankKind::Weight)?;
        (0..n).map(|_| self.u32().map(|x| x as i32)).collect()
    }
    fn bank_count(&mut self, expected: u8) -> Result<(), ContainerError> {
        if self.u8()? != expected {
            return Err(ContainerError::Layout("wrong number of banks"));
        }
        Ok(())
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<AnyStore<T>, ContainerError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ContainerError::Magic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ContainerError::Version(version));
    }
    let tag = r.u8()?;
    let scheme = Scheme::from_tag(tag).ok_or(ContainerError::Scheme(tag))?;
    let n_pre = r.usize()?;
    let n_post = r.usize()?;
    let b_w = r.u8()? as u32;
    super::check_bits(b_w)?;
    let store = match scheme {
        Scheme::Crossbar => {
            r.bank_count(1)?;
            let codes = r.codes()?;
            if Some(codes.len()) != n_pre.checked_mul(n_post) {
                return Err(ContainerError::Layout("crossbar needs n_pre * n_post words"));
            }
            AnyStore::Crossbar(CrossbarStore::from_codes(n_pre, n_post, b_w, codes))
        }
        Scheme::Csr => {
            let nnz = r.usize()?;
            r.bank_count(3)?;
            let row_ptr = r.u64s(BankKind::RowPtr)?;
            let col_idx = r.u32s(BankKind::ColIdx)?;
            let codes = r.codes()?;
            if codes.len() != nnz {
                return Err(ContainerError::Layout("weight count differs from nnz"));
            }
            AnyStore::Csr(CsrStore::from_parts(n_pre, n_post, b_w, row_ptr, col_idx, codes)?)
        }
        Scheme::Bitmap => {
            let w_word = r.u8()? as u32;
            let nnz = r.usize()?;
            r.bank_count(3)?;
            let row_ptr = r.u64s(BankKind::RowPtr)?;
            let bitmap = r.u64s(BankKind::Bitmap)?;
            let codes = r.codes()?;
            if codes.len() != nnz {
                return Err(ContainerError::Layout("weight count differs from nnz"));
            }
            AnyStore::Bitmap(BitmapStore::from_parts(n_pre, n_post, b_w, w_word, row_ptr, bitmap, codes)?)
        }
        Scheme::Functional => {
            let mut dims = [0usize; 6];
            for d in &mut dims {
                *d = r.u32()? as usize;
            }
            let g = ConvGeometry::new(dims[0], dims[1], dims[2], dims[3], dims[4], dims[5])?;
            if g.n_pre() != n_pre || g.n_post() != n_post {
                return Err(ContainerError::Layout("geometry disagrees with the header dimensions"));
            }
            r.bank_count(1)?;
            let codes = r.codes()?;
            if codes.len() != g.kernel_len() {
                return Err(StoreError::KernelLength { expected: g.kernel_len(), got: codes.len() }.into());
            }
            AnyStore::Functional(FunctionalStore::from_codes(g, b_w, codes))
        }
    };
    if r.pos != bytes.len() {
        return Err(ContainerError::Trailing(bytes.len() - r.pos));
    }
    Ok(store)
}
