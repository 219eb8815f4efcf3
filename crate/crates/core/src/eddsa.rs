//! Schnorr-style EdDSA over a twisted Edwards curve with an algebraic
//! challenge hash, matching the relation checked by the membership circuit:
//!
//! ```text
//! h = H(R.x, R.y, pk.x, pk.y, M)
//! S*G == R + h*pk
//! ```
//!
//! `R` is bound into the challenge; without it `S` could be chosen freely and
//! `R = S*G - h*pk` solved for, forging a signature on any message.
//! Nonces are derived deterministically from the secret key and message.

use std::fmt;

use num_bigint::BigUint;
use sha2::{Digest, Sha512};
use thiserror::Error;

use crate::edwards::{field_byte_len, field_le_bytes, field_to_biguint, EdwardsParams, Point};
use crate::encoding::{DecodeError, Reader, Writer};

pub const MIN_SEED_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("seed must carry at least {MIN_SEED_LEN} bytes, got {0}")]
    SeedTooShort(usize),
}

pub struct SigningKeyPair<P: EdwardsParams> {
    sk: BigUint,
    pub pk: Point<P>,
}

impl<P: EdwardsParams> Clone for SigningKeyPair<P> {
    fn clone(&self) -> Self {
        Self {
            sk: self.sk.clone(),
            pk: self.pk,
        }
    }
}

impl<P: EdwardsParams> fmt::Debug for SigningKeyPair<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKeyPair").field("pk", &self.pk).finish_non_exhaustive()
    }
}

pub struct Signature<P: EdwardsParams> {
    pub r: Point<P>,
    pub s: BigUint,
}

impl<P: EdwardsParams> Clone for Signature<P> {
    fn clone(&self) -> Self {
        Self {
            r: self.r,
            s: self.s.clone(),
        }
    }
}

impl<P: EdwardsParams> PartialEq for Signature<P> {
    fn eq(&self, other: &Self) -> bool {
        self.r == other.r && self.s == other.s
    }
}

impl<P: EdwardsParams> Eq for Signature<P> {}

impl<P: EdwardsParams> fmt::Debug for Signature<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature {{ r: {:?}, s: {} }}", self.r, self.s)
    }
}

impl<P: EdwardsParams> Signature<P> {
    pub fn write(&self, w: &mut Writer) {
        self.r.write(w);
        let mut s = self.s.to_bytes_le();
        s.resize(field_byte_len::<P::Field>(), 0);
        w.raw(&s);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let point = Point::<P>::read(r)?;
        let s = BigUint::from_bytes_le(r.raw(field_byte_len::<P::Field>())?);
        if s >= P::subgroup_order() {
            return Err(DecodeError::Invalid("signature scalar not reduced".into()));
        }
        Ok(Self { r: point, s })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        self.write(&mut w);
        w.into_bytes()
    }
}

/// Maps arbitrary bytes to a nonzero scalar below the subgroup order,
/// re-deriving with a counter when the reduction lands on zero.
fn derive_scalar<P: EdwardsParams>(domain: &[u8], parts: &[&[u8]]) -> BigUint {
    let order = P::subgroup_order();
    for counter in 0u32.. {
        let mut h = Sha512::new();
        h.update(domain);
        h.update(counter.to_le_bytes());
        for part in parts {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        let v = BigUint::from_bytes_le(&h.finalize()) % &order;
        if v != BigUint::default() {
            return v;
        }
    }
    unreachable!("counter space exhausted")
}

impl<P: EdwardsParams> SigningKeyPair<P> {
    pub fn generate(seed: &[u8]) -> Result<Self, KeyError> {
        if seed.len() < MIN_SEED_LEN {
            return Err(KeyError::SeedTooShort(seed.len()));
        }
        let sk = derive_scalar::<P>(b"expresso/eddsa/secret-key", &[seed]);
        Ok(Self::from_scalar(sk))
    }

    /// Panics on a zero scalar.
    pub fn from_scalar(sk: BigUint) -> Self {
        let sk = sk % P::subgroup_order();
        assert!(sk != BigUint::default(), "secret scalar must be nonzero");
        let pk = Point::<P>::generator().mul(&sk);
        Self { sk, pk }
    }

    pub fn secret_scalar(&self) -> &BigUint {
        &self.sk
    }

    pub fn sign(&self, message: &P::Field) -> Signature<P> {
        let order = P::subgroup_order();
        let sk_bytes = self.sk.to_bytes_le();
        let m_bytes = field_le_bytes(message);
        let nonce = derive_scalar::<P>(b"expresso/eddsa/nonce", &[&sk_bytes, &m_bytes]);
        let r = Point::<P>::generator().mul(&nonce);
        let h = challenge(&r, &self.pk, message) % &order;
        let s = (nonce + h * &self.sk) % order;
        Signature { r, s }
    }
}

/// The challenge `h = H(R, pk, M)` as an integer in `[0, p)`.
pub fn challenge<P: EdwardsParams>(r: &Point<P>, pk: &Point<P>, message: &P::Field) -> BigUint {
    field_to_biguint(&P::challenge_hash(&[r.x, r.y, pk.x, pk.y, *message]))
}

/// Returns `false` for any malformed input rather than erroring.
pub fn verify_native<P: EdwardsParams>(pk: &Point<P>, message: &P::Field, sig: &Signature<P>) -> bool {
    if sig.s >= P::subgroup_order() || !pk.is_in_prime_subgroup() || !sig.r.is_in_prime_subgroup() {
        return false;
    }
    let h = challenge(&sig.r, pk, message);
    let lhs = Point::<P>::generator().mul(&sig.s);
    let rhs = sig.r.add(&pk.mul(&h));
    lhs == rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::babyjubjub::{BabyJubjub, Point as BjjPoint};
    use ark_bn254::Fr;
    use ark_ff::{BigInteger, PrimeField};

    type KeyPair = SigningKeyPair<BabyJubjub>;

    #[test]
    fn deterministic_keys_and_signatures() {
        let a = KeyPair::generate(&[7u8; 32]).unwrap();
        let b = KeyPair::generate(&[7u8; 32]).unwrap();
        assert_eq!(a.pk, b.pk);
        assert_eq!(a.sign(&Fr::from(9u64)), b.sign(&Fr::from(9u64)));
        assert_ne!(a.pk, KeyPair::generate(&[8u8; 32]).unwrap().pk);
        assert_eq!(KeyPair::generate(&[0u8; 31]).unwrap_err(), KeyError::SeedTooShort(31));
    }

    #[test]
    fn unit_secret_gives_generator() {
        assert_eq!(KeyPair::from_scalar(BigUint::from(1u32)).pk, BjjPoint::generator());
    }

    #[test]
    fn small_secret_matches_repeated_addition() {
        let g = BjjPoint::generator();
        let mut expected = BjjPoint::identity();
        for k in 1u32..=24 {
            expected = expected.add(&g);
            assert_eq!(KeyPair::from_scalar(BigUint::from(k)).pk, expected);
        }
    }

    #[test]
    fn sign_verify_and_mutations() {
        let kp = KeyPair::generate(b"an honest identity provider seed!").unwrap();
        let m = Fr::from(123_456u64);
        let sig = kp.sign(&m);
        assert!(verify_native(&kp.pk, &m, &sig));

        let mut bumped = sig.clone();
        bumped.s = (&bumped.s + 1u32) % crate::babyjubjub::subgroup_order();
        assert!(!verify_native(&kp.pk, &m, &bumped));

        // Flip each of the low 64 message bits in turn.
        let bits = m.into_bigint().to_bits_le();
        for i in 0..64 {
            let mut flipped = bits.clone();
            flipped[i] = !flipped[i];
            let m2 = Fr::from_bigint(<Fr as PrimeField>::BigInt::from_bits_le(&flipped)).unwrap();
            assert!(!verify_native(&kp.pk, &m2, &sig), "bit {i}");
        }

        let other = KeyPair::generate(&[1u8; 32]).unwrap();
        assert!(!verify_native(&other.pk, &m, &sig));
    }

    #[test]
    fn off_curve_and_small_order_inputs_are_rejected() {
        let kp = KeyPair::generate(&[3u8; 32]).unwrap();
        let m = Fr::from(5u64);
        let sig = kp.sign(&m);
        let off = BjjPoint::new_unchecked(Fr::from(1u64), Fr::from(1u64));
        assert!(!off.is_on_curve());
        assert!(!verify_native(&off, &m, &sig));
        let mut bad = sig.clone();
        bad.r = off;
        assert!(!verify_native(&kp.pk, &m, &bad));
        // R shifted by the order-two point keeps 8*S*G == 8*(R + h*pk) but
        // must still fail the subgroup check.
        let mut shifted = sig.clone();
        shifted.r = sig.r.add(&BjjPoint::new_unchecked(Fr::from(0u64), -Fr::from(1u64)));
        assert!(!verify_native(&kp.pk, &m, &shifted));
    }

    #[test]
    fn signature_encoding_round_trips() {
        let kp = KeyPair::generate(&[4u8; 32]).unwrap();
        let sig = kp.sign(&Fr::from(77u64));
        let bytes = sig.to_bytes();
        assert_eq!(bytes.len(), 65);
        let back = Signature::<BabyJubjub>::read(&mut Reader::new(&bytes)).unwrap();
        assert_eq!(back, sig);
    }
}
