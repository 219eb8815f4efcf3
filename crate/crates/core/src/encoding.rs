//! Canonical binary encoding shared by every persisted or transmitted type.
//!
//! Layout rules (see `docs/wire-format.md` for the full table):
//!
//! * integers are little-endian (`u8`, `u32`, `u64`);
//! * byte strings and vectors carry a `u32` little-endian length prefix;
//! * scalar-field elements are 32 bytes little-endian, canonical (`< p`);
//! * curve points are compressed to their x-coordinate followed by one
//!   explicit sign byte (`0x00` smaller root, `0x01` larger root,
//!   `0x02` identity with an all-zero coordinate).
//!
//! Decoding is strict: non-canonical field elements, points off the curve or
//! outside the prime-order subgroup, and trailing bytes are all rejected.

use ark_bn254::{Fq, Fq2, Fr, G1Affine, G2Affine};
use ark_ec::AffineRepr;
use ark_ff::{BigInteger, PrimeField, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("non-canonical field element")]
    NonCanonicalField,
    #[error("invalid point encoding: {0}")]
    InvalidPoint(&'static str),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Types with a canonical byte encoding.
pub trait Encode {
    fn encode(&self, w: &mut Writer);

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        self.encode(&mut w);
        w.into_bytes()
    }
}

pub trait Decode: Sized {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Decodes a complete buffer, rejecting trailing bytes.
    fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

#[derive(Default, Debug, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn bytes(&mut self, bytes: &[u8]) {
        self.len_prefix(bytes.len());
        self.raw(bytes);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn len_prefix(&mut self, len: usize) {
        self.u32(u32::try_from(len).expect("length exceeds u32"));
    }

    pub fn fr(&mut self, v: &Fr) {
        write_prime_field(self, v);
    }

    pub fn g1(&mut self, p: &G1Affine) {
        if p.is_zero() {
            self.raw(&[0u8; 32]);
            self.u8(2);
            return;
        }
        write_prime_field(self, &p.x);
        self.u8(u8::from(p.y > -p.y));
    }

    pub fn g2(&mut self, p: &G2Affine) {
        if p.is_zero() {
            self.raw(&[0u8; 64]);
            self.u8(2);
            return;
        }
        write_prime_field(self, &p.x.c0);
        write_prime_field(self, &p.x.c1);
        self.u8(u8::from(p.y > -p.y));
    }

    pub fn vec<T>(&mut self, items: &[T], mut f: impl FnMut(&mut Self, &T)) {
        self.len_prefix(items.len());
        for item in items {
            f(self, item);
        }
    }
}

fn write_prime_field<F: PrimeField>(w: &mut Writer, v: &F) {
    let mut bytes = v.into_bigint().to_bytes_le();
    bytes.resize(32, 0);
    w.raw(&bytes);
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.raw(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.raw(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn len_prefix(&mut self) -> Result<usize, DecodeError> {
        Ok(self.u32()? as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.len_prefix()?;
        self.raw(len)
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let bytes = self.bytes()?;
        String::from_utf8(bytes.to_vec()).map_err(|e| DecodeError::Invalid(e.to_string()))
    }

    pub fn fr(&mut self) -> Result<Fr, DecodeError> {
        read_prime_field(self)
    }

    pub fn g1(&mut self) -> Result<G1Affine, DecodeError> {
        let x: Fq = read_prime_field(self)?;
        let sign = self.u8()?;
        let p = match sign {
            2 if x.is_zero() => return Ok(G1Affine::zero()),
            0 | 1 => G1Affine::get_point_from_x_unchecked(x, sign == 1)
                .ok_or(DecodeError::InvalidPoint("x is not on G1"))?,
            _ => return Err(DecodeError::InvalidPoint("bad sign byte")),
        };
        // BN254 G1 has cofactor one; on-curve implies subgroup membership.
        Ok(p)
    }

    pub fn g2(&mut self) -> Result<G2Affine, DecodeError> {
        let c0: Fq = read_prime_field(self)?;
        let c1: Fq = read_prime_field(self)?;
        let x = Fq2::new(c0, c1);
        let sign = self.u8()?;
        let p = match sign {
            2 if x.is_zero() => return Ok(G2Affine::zero()),
            0 | 1 => G2Affine::get_point_from_x_unchecked(x, sign == 1)
                .ok_or(DecodeError::InvalidPoint("x is not on G2"))?,
            _ => return Err(DecodeError::InvalidPoint("bad sign byte")),
        };
        if !p.is_in_correct_subgroup_assuming_on_curve() {
            return Err(DecodeError::InvalidPoint("G2 point outside prime subgroup"));
        }
        Ok(p)
    }

    pub fn vec<T>(
        &mut self,
        mut f: impl FnMut(&mut Self) -> Result<T, DecodeError>,
    ) -> Result<Vec<T>, DecodeError> {
        let len = self.len_prefix()?;
        // Every element takes at least one byte; refuse absurd prefixes early.
        if len > self.remaining() {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: len,
            });
        }
        (0..len).map(|_| f(self)).collect()
    }
}

fn read_prime_field<F: PrimeField>(r: &mut Reader<'_>) -> Result<F, DecodeError> {
    let bytes = r.raw(32)?;
    let v = F::from_le_bytes_mod_order(bytes);
    let mut canonical = v.into_bigint().to_bytes_le();
    canonical.resize(32, 0);
    if canonical != bytes {
        return Err(DecodeError::NonCanonicalField);
    }
    Ok(v)
}

impl Encode for Fr {
    fn encode(&self, w: &mut Writer) {
        w.fr(self);
    }
}

impl Decode for Fr {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.fr()
    }
}
