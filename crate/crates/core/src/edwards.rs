//! Twisted Edwards curves `a*x^2 + y^2 = 1 + d*x^2*y^2` over a prime field.
//!
//! Generic over the curve so the same arithmetic serves the embedded Baby
//! Jubjub curve and the small test curves used for exhaustive checks.
//! Addition uses the complete unified formulas (valid when `a` is a square
//! and `d` is not), in extended coordinates for scalar multiplication.

use std::fmt;
use std::marker::PhantomData;

use ark_ff::{BigInteger, Field, PrimeField, Zero};
use num_bigint::BigUint;

use crate::encoding::{DecodeError, Reader, Writer};

pub trait EdwardsParams: 'static + Send + Sync {
    type Field: PrimeField;

    fn a() -> Self::Field;
    fn d() -> Self::Field;
    /// Generator of the prime-order subgroup.
    fn base_point() -> (Self::Field, Self::Field);
    fn subgroup_order() -> BigUint;
    fn cofactor() -> u64;
    /// Hash used to derive the signature challenge.
    fn challenge_hash(inputs: &[Self::Field]) -> Self::Field;
}

pub struct Point<P: EdwardsParams> {
    pub x: P::Field,
    pub y: P::Field,
    _curve: PhantomData<P>,
}

impl<P: EdwardsParams> Clone for Point<P> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<P: EdwardsParams> Copy for Point<P> {}

impl<P: EdwardsParams> PartialEq for Point<P> {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.y == other.y
    }
}

impl<P: EdwardsParams> Eq for Point<P> {}

impl<P: EdwardsParams> std::hash::Hash for Point<P> {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.x.hash(state);
        self.y.hash(state);
    }
}

impl<P: EdwardsParams> fmt::Debug for Point<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point({}, {})", self.x, self.y)
    }
}

impl<P: EdwardsParams> Point<P> {
    /// Builds a point without checking the curve equation.
    pub fn new_unchecked(x: P::Field, y: P::Field) -> Self {
        Self {
            x,
            y,
            _curve: PhantomData,
        }
    }

    pub fn identity() -> Self {
        Self::new_unchecked(P::Field::from(0u64), P::Field::from(1u64))
    }

    pub fn generator() -> Self {
        let (x, y) = P::base_point();
        Self::new_unchecked(x, y)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn is_on_curve(&self) -> bool {
        let x2 = self.x.square();
        let y2 = self.y.square();
        P::a() * x2 + y2 == P::Field::from(1u64) + P::d() * x2 * y2
    }

    pub fn is_in_prime_subgroup(&self) -> bool {
        self.is_on_curve() && self.mul(&P::subgroup_order()).is_identity()
    }

    pub fn neg(&self) -> Self {
        Self::new_unchecked(-self.x, self.y)
    }

    /// Affine addition with the complete unified formula.
    pub fn add(&self, other: &Self) -> Self {
        let one = P::Field::from(1u64);
        let x1x2 = self.x * other.x;
        let y1y2 = self.y * other.y;
        let t = P::d() * x1x2 * y1y2;
        let x3 = (self.x * other.y + self.y * other.x) * (one + t).inverse().expect("complete");
        let y3 = (y1y2 - P::a() * x1x2) * (one - t).inverse().expect("complete");
        Self::new_unchecked(x3, y3)
    }

    pub fn double(&self) -> Self {
        self.add(self)
    }

    /// Left-to-right double-and-add in extended coordinates.
    pub fn mul(&self, scalar: &BigUint) -> Self {
        let base = Extended::from_affine(self);
        let mut acc = Extended::<P>::identity();
        for i in (0..scalar.bits()).rev() {
            acc = acc.add(&acc);
            if scalar.bit(i) {
                acc = acc.add(&base);
            }
        }
        acc.to_affine()
    }

    pub fn mul_by_cofactor(&self) -> Self {
        self.mul(&BigUint::from(P::cofactor()))
    }

    /// Encodes as `y` (little-endian) followed by a sign byte for `x`
    /// (`1` when `x` is the larger of `{x, -x}` as integers).
    pub fn write(&self, w: &mut Writer) {
        w.raw(&field_le_bytes(&self.y));
        w.u8(u8::from(self.x > -self.x));
    }

    /// Decodes and checks on-curve and prime-subgroup membership.
    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let p = Self::read_on_curve(r)?;
        if !p.is_in_prime_subgroup() {
            return Err(DecodeError::InvalidPoint("point outside prime-order subgroup"));
        }
        Ok(p)
    }

    /// Decodes and checks only the curve equation.
    pub fn read_on_curve(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let bytes = r.raw(field_byte_len::<P::Field>())?;
        let y = P::Field::from_le_bytes_mod_order(bytes);
        if field_le_bytes(&y) != bytes {
            return Err(DecodeError::NonCanonicalField);
        }
        let sign = r.u8()?;
        if sign > 1 {
            return Err(DecodeError::InvalidPoint("bad sign byte"));
        }
        let one = P::Field::from(1u64);
        let y2 = y.square();
        let den = P::a() - P::d() * y2;
        let x2 = (one - y2) * den.inverse().ok_or(DecodeError::InvalidPoint("degenerate y"))?;
        let mut x = x2.sqrt().ok_or(DecodeError::InvalidPoint("not on curve"))?;
        if (x > -x) != (sign == 1) {
            x = -x;
        }
        if x.is_zero() && sign == 1 {
            return Err(DecodeError::InvalidPoint("non-canonical sign for x = 0"));
        }
        Ok(Self::new_unchecked(x, y))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        self.write(&mut w);
        w.into_bytes()
    }
}

pub fn field_byte_len<F: PrimeField>() -> usize {
    (F::MODULUS_BIT_SIZE as usize).div_ceil(8)
}

pub fn field_le_bytes<F: PrimeField>(v: &F) -> Vec<u8> {
    let mut bytes = v.into_bigint().to_bytes_le();
    bytes.resize(field_byte_len::<F>(), 0);
    bytes
}

pub fn field_to_biguint<F: PrimeField>(v: &F) -> BigUint {
    BigUint::from_bytes_le(&v.into_bigint().to_bytes_le())
}

pub fn biguint_to_field<F: PrimeField>(v: &BigUint) -> F {
    F::from_le_bytes_mod_order(&v.to_bytes_le())
}

/// Extended twisted Edwards coordinates `(X:Y:T:Z)` with `x = X/Z`, `y = Y/Z`, `T = XY/Z`.
struct Extended<P: EdwardsParams> {
    x: P::Field,
    y: P::Field,
    t: P::Field,
    z: P::Field,
}

impl<P: EdwardsParams> Extended<P> {
    fn identity() -> Self {
        Self {
            x: P::Field::zero(),
            y: P::Field::from(1u64),
            t: P::Field::zero(),
            z: P::Field::from(1u64),
        }
    }

    fn from_affine(p: &Point<P>) -> Self {
        Self {
            x: p.x,
            y: p.y,
            t: p.x * p.y,
            z: P::Field::from(1u64),
        }
    }

    fn add(&self, o: &Self) -> Self {
        let a = self.x * o.x;
        let b = self.y * o.y;
        let c = P::d() * self.t * o.t;
        let d = self.z * o.z;
        let e = (self.x + self.y) * (o.x + o.y) - a - b;
        let f = d - c;
        let g = d + c;
        let h = b - P::a() * a;
        Self {
            x: e * f,
            y: g * h,
            t: e * h,
            z: f * g,
        }
    }

    fn to_affine(&self) -> Point<P> {
        let zinv = self.z.inverse().expect("complete formulas keep Z nonzero");
        Point::new_unchecked(self.x * zinv, self.y * zinv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::babyjubjub::Point as BjjPoint;

    #[test]
    fn extended_mul_matches_affine_double_and_add() {
        let g = BjjPoint::generator();
        let mut expected = BjjPoint::identity();
        for k in 0u64..40 {
            assert_eq!(g.mul(&BigUint::from(k)), expected, "k = {k}");
            expected = expected.add(&g);
        }
    }

    #[test]
    fn encoding_round_trips_and_checks_subgroup() {
        let g = BjjPoint::generator();
        for k in [1u64, 2, 3, 1000, 123_456_789] {
            let p = g.mul(&BigUint::from(k));
            let bytes = p.to_bytes();
            assert_eq!(bytes.len(), 33);
            let mut r = Reader::new(&bytes);
            assert_eq!(BjjPoint::read(&mut r).unwrap(), p);
        }
        // A low-order point is on the curve but rejected by the subgroup check.
        let low = low_order_point();
        let bytes = low.to_bytes();
        assert!(BjjPoint::read_on_curve(&mut Reader::new(&bytes)).is_ok());
        assert!(BjjPoint::read(&mut Reader::new(&bytes)).is_err());
    }

    /// (0, -1) has order two on every twisted Edwards curve.
    fn low_order_point() -> BjjPoint {
        let p = BjjPoint::new_unchecked(ark_bn254::Fr::zero(), -ark_bn254::Fr::from(1u64));
        assert!(p.is_on_curve());
        assert!(p.double().is_identity());
        p
    }
}
