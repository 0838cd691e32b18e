//! Byte framing shared by every serialized object.
//!
//! Integers are big-endian with a 4-byte big-endian length prefix. Residues
//! modulo `n²` are written at the fixed width of `n²` so a ciphertext always
//! occupies exactly `2·L(n)` bits of payload. The encoder attributes every
//! byte it writes to a [`Section`] so link accounting can separate the
//! ciphertext payload from framing and auxiliary material.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accounting class of encoded bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Section {
    /// Tags, identifiers and length prefixes.
    Framing,
    /// Residues of homomorphic (VP-HE / Paillier) ciphertexts.
    Homomorphic,
    /// Per-leaf components of attribute-based ciphertexts.
    AbeComponents,
    /// Everything else: policies, public keys, KEM headers, sealed envelopes.
    Auxiliary,
}

/// Bit totals per [`Section`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Breakdown {
    pub framing: u64,
    pub homomorphic: u64,
    pub abe_components: u64,
    pub auxiliary: u64,
}

impl Breakdown {
    pub fn total(&self) -> u64 {
        self.framing + self.homomorphic + self.abe_components + self.auxiliary
    }

    /// Total without framing.
    pub fn payload(&self) -> u64 {
        self.homomorphic + self.abe_components + self.auxiliary
    }

    fn slot(&mut self, section: Section) -> &mut u64 {
        match section {
            Section::Framing => &mut self.framing,
            Section::Homomorphic => &mut self.homomorphic,
            Section::AbeComponents => &mut self.abe_components,
            Section::Auxiliary => &mut self.auxiliary,
        }
    }
}

impl std::ops::AddAssign for Breakdown {
    fn add_assign(&mut self, rhs: Breakdown) {
        self.framing += rhs.framing;
        self.homomorphic += rhs.homomorphic;
        self.abe_components += rhs.abe_components;
        self.auxiliary += rhs.auxiliary;
    }
}

/// Byte length of the minimal big-endian form (zero encodes as no bytes).
pub fn minimal_len(x: &BigUint) -> usize {
    (x.bits() as usize).div_ceil(8)
}

fn minimal_bytes(x: &BigUint) -> Vec<u8> {
    if x.bits() == 0 {
        Vec::new()
    } else {
        x.to_bytes_be()
    }
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
    breakdown: Breakdown,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    fn put(&mut self, bytes: &[u8], section: Section) {
        self.buf.extend_from_slice(bytes);
        *self.breakdown.slot(section) += 8 * bytes.len() as u64;
    }

    pub fn put_u8(&mut self, v: u8) {
        self.put(&[v], Section::Framing);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.put(&v.to_be_bytes(), Section::Framing);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.put(&v.to_be_bytes(), Section::Framing);
    }

    pub fn put_u64(&mut self, v: u64) {
        self.put(&v.to_be_bytes(), Section::Framing);
    }

    fn put_len(&mut self, len: usize) {
        self.put_u32(u32::try_from(len).expect("field longer than 4 GiB"));
    }

    /// Length-prefixed minimal big-endian integer.
    pub fn put_uint(&mut self, x: &BigUint, section: Section) {
        let bytes = minimal_bytes(x);
        self.put_len(bytes.len());
        self.put(&bytes, section);
    }

    /// Length-prefixed integer left-padded to `width` bytes.
    pub fn put_residue(&mut self, x: &BigUint, width: usize, section: Section) {
        let bytes = minimal_bytes(x);
        assert!(bytes.len() <= width, "residue wider than its modulus");
        self.put_len(width);
        let mut padded = vec![0u8; width - bytes.len()];
        padded.extend_from_slice(&bytes);
        self.put(&padded, section);
    }

    pub fn put_bytes(&mut self, bytes: &[u8], section: Section) {
        self.put_len(bytes.len());
        self.put(bytes, section);
    }

    /// Fixed-size bytes without a length prefix.
    pub fn put_raw(&mut self, bytes: &[u8], section: Section) {
        self.put(bytes, section);
    }

    pub fn put_str(&mut self, s: &str, section: Section) {
        self.put_bytes(s.as_bytes(), section);
    }

    pub fn breakdown(&self) -> Breakdown {
        self.breakdown
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> (Vec<u8>, Breakdown) {
        (self.buf, self.breakdown)
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| Error::Decode(format!("truncated input at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn raw(&mut self, len: usize) -> Result<&'a [u8]> {
        self.take(len)
    }

    pub fn uint(&mut self) -> Result<BigUint> {
        Ok(BigUint::from_bytes_be(self.bytes()?))
    }

    pub fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|e| Error::Decode(e.to_string()))
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn finish(self) -> Result<()> {
        if self.is_done() {
            Ok(())
        } else {
            Err(Error::Decode(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}
