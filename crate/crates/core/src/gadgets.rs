//! Constraint gadgets used by the boilerplate compiler.

use ark_bn254::Fr;
use ark_ff::{BigInteger, Field, One, PrimeField};
use num_bigint::BigUint;

use crate::babyjubjub::{self, Point, COEFF_A, COEFF_D};
use crate::edwards::{biguint_to_field, field_to_biguint};
use crate::poseidon::{self, PoseidonParams, MAX_WIDTH, SPONGE_RATE};
use crate::r1cs::{CircuitBuilder, Num};

/// Poseidon lanes longer than this are materialized into a fresh variable.
const MAX_LANE_TERMS: usize = 12;

#[derive(Debug, Clone)]
pub struct PointVar {
    pub x: Num,
    pub y: Num,
}

impl PointVar {
    pub fn constant(p: &Point) -> Self {
        Self {
            x: Num::constant(p.x),
            y: Num::constant(p.y),
        }
    }

    pub fn value(&self) -> Point {
        Point::new_unchecked(self.x.value, self.y.value)
    }
}

/// Boolean constraint `b * (1 - b) = 0`.
pub fn enforce_boolean(cs: &mut CircuitBuilder, b: &Num) {
    let one_minus = Num::one().sub(b);
    cs.enforce(b, &one_minus, &Num::zero());
}

/// Little-endian bits of `x`, constrained to recompose to `x` and to encode
/// an integer no larger than `bound`. `bound` must be below the field
/// modulus, which makes the decomposition unique.
pub fn to_bits_le_bounded(cs: &mut CircuitBuilder, x: &Num, bound: &BigUint) -> Vec<Num> {
    let n_bits = bound.bits() as usize;
    let value = field_to_biguint(&x.value);
    let bits: Vec<Num> = (0..n_bits)
        .map(|i| cs.alloc(Fr::from(u64::from(value.bit(i as u64)))))
        .collect();
    for b in &bits {
        enforce_boolean(cs, b);
    }
    let mut acc = Num::zero();
    let mut coeff = Fr::one();
    for b in &bits {
        acc = acc.add(&b.scale(coeff));
        coeff += coeff;
    }
    cs.enforce_equal(&acc, x);
    enforce_le_constant(cs, &bits, bound);
    bits
}

/// Enforces that little-endian boolean `bits` encode an integer `<= bound`.
///
/// Walks the bound from its most significant bit. `run` tracks whether the
/// witness prefix equals the bound prefix; wherever the bound has a zero, a
/// one in the witness is only allowed once the prefixes have diverged.
pub fn enforce_le_constant(cs: &mut CircuitBuilder, bits: &[Num], bound: &BigUint) {
    assert_eq!(bits.len(), bound.bits() as usize, "bit length must match the bound");
    let mut run: Option<Num> = None;
    let mut pending: Vec<Num> = Vec::new();
    for i in (0..bits.len()).rev() {
        if bound.bit(i as u64) {
            pending.push(bits[i].clone());
            continue;
        }
        if !pending.is_empty() {
            if let Some(prev) = run.take() {
                pending.push(prev);
            }
            run = Some(and_all(cs, &pending));
            pending.clear();
        }
        let prefix_equal = run.clone().expect("bound has a leading one");
        cs.enforce(&prefix_equal, &bits[i], &Num::zero());
    }
}

fn and_all(cs: &mut CircuitBuilder, bits: &[Num]) -> Num {
    let mut acc = bits[0].clone();
    for b in &bits[1..] {
        acc = cs.mul(&acc, b);
    }
    acc
}

/// `a*x^2 + y^2 = 1 + d*x^2*y^2`.
pub fn enforce_on_curve(cs: &mut CircuitBuilder, p: &PointVar) {
    let x2 = cs.mul(&p.x, &p.x);
    let y2 = cs.mul(&p.y, &p.y);
    let lhs = x2.scale(Fr::from(COEFF_A)).add(&y2).add_constant(-Fr::one());
    cs.enforce(&x2.scale(Fr::from(COEFF_D)), &y2, &lhs);
}

/// Complete twisted Edwards addition in six constraints.
pub fn add_points(cs: &mut CircuitBuilder, p: &PointVar, q: &PointVar) -> PointVar {
    let a = Fr::from(COEFF_A);
    let d = Fr::from(COEFF_D);
    let beta = cs.mul(&p.x, &q.y);
    let gamma = cs.mul(&p.y, &q.x);
    let delta = cs.mul(&p.y.sub(&p.x.scale(a)), &q.x.add(&q.y));
    let tau = cs.mul(&beta, &gamma);

    let dt = d * tau.value;
    let x3_val = (beta.value + gamma.value) * (Fr::one() + dt).inverse().unwrap_or_default();
    let y3_val = (delta.value + a * beta.value - gamma.value)
        * (Fr::one() - dt).inverse().unwrap_or_default();
    let x3 = cs.alloc(x3_val);
    let y3 = cs.alloc(y3_val);
    cs.enforce(&x3, &tau.scale(d).add_constant(Fr::one()), &beta.add(&gamma));
    cs.enforce(
        &y3,
        &tau.scale(-d).add_constant(Fr::one()),
        &delta.add(&beta.scale(a)).sub(&gamma),
    );
    PointVar { x: x3, y: y3 }
}

/// `bit ? p : q`, two constraints.
pub fn select_point(cs: &mut CircuitBuilder, bit: &Num, p: &PointVar, q: &PointVar) -> PointVar {
    let pick = |cs: &mut CircuitBuilder, a: &Num, b: &Num| {
        let value = if bit.value.is_one() { a.value } else { b.value };
        let out = cs.alloc(value);
        cs.enforce(bit, &a.sub(b), &out.sub(b));
        out
    };
    PointVar {
        x: pick(cs, &p.x, &q.x),
        y: pick(cs, &p.y, &q.y),
    }
}

/// Variable-base scalar multiplication from little-endian bits.
pub fn mul_point(cs: &mut CircuitBuilder, bits: &[Num], base: &PointVar) -> PointVar {
    let mut acc = PointVar::constant(&Point::identity());
    let mut power = base.clone();
    for (i, bit) in bits.iter().enumerate() {
        let sum = add_points(cs, &acc, &power);
        acc = select_point(cs, bit, &sum, &acc);
        if i + 1 < bits.len() {
            power = add_points(cs, &power, &power);
        }
    }
    acc
}

/// Fixed-base scalar multiplication by the curve generator. Selecting between
/// a constant and the identity is linear, so each bit costs one addition.
pub fn mul_generator(cs: &mut CircuitBuilder, bits: &[Num]) -> PointVar {
    let mut power = Point::generator();
    let mut acc: Option<PointVar> = None;
    for bit in bits {
        // bit ? power : (0, 1)
        let addend = PointVar {
            x: bit.scale(power.x),
            y: bit.scale(power.y - Fr::one()).add_constant(Fr::one()),
        };
        acc = Some(match acc {
            None => addend,
            Some(acc) => add_points(cs, &acc, &addend),
        });
        power = power.double();
    }
    acc.unwrap_or_else(|| PointVar::constant(&Point::identity()))
}

/// Constrains `p = 8 * p0` for a fresh on-curve witness `p0`, which places
/// `p` in the prime-order subgroup.
pub fn enforce_prime_order(cs: &mut CircuitBuilder, p: &PointVar) {
    let order = babyjubjub::subgroup_order();
    let inv8 = BigUint::from(8u32).modinv(order).expect("8 is invertible mod the order");
    let p0_val = p.value().mul(&inv8);
    let p0 = PointVar {
        x: cs.alloc(p0_val.x),
        y: cs.alloc(p0_val.y),
    };
    enforce_on_curve(cs, &p0);
    let mut acc = p0;
    for _ in 0..3 {
        acc = add_points(cs, &acc, &acc);
    }
    cs.enforce_equal(&acc.x, &p.x);
    cs.enforce_equal(&acc.y, &p.y);
}

fn sbox(cs: &mut CircuitBuilder, x: &Num) -> Num {
    let x2 = cs.mul(x, x);
    let x4 = cs.mul(&x2, &x2);
    cs.mul(&x4, x)
}

fn permute(cs: &mut CircuitBuilder, params: &PoseidonParams<Fr>, state: &mut [Num]) {
    let t = params.width;
    for round in 0..params.total_rounds() {
        for (i, lane) in state.iter_mut().enumerate() {
            *lane = lane.add_constant(params.round_constants[round * t + i]);
        }
        if params.is_full_round(round) {
            for lane in state.iter_mut() {
                *lane = sbox(cs, lane);
            }
        } else {
            state[0] = sbox(cs, &state[0]);
        }
        let mixed: Vec<Num> = (0..t)
            .map(|i| {
                state
                    .iter()
                    .zip(&params.mds[i])
                    .fold(Num::zero(), |acc, (s, m)| acc.add(&s.scale(*m)))
            })
            .collect();
        for (lane, m) in state.iter_mut().zip(mixed) {
            *lane = if m.terms.len() > MAX_LANE_TERMS {
                cs.materialize(&m)
            } else {
                m
            };
        }
    }
}

/// In-circuit counterpart of [`poseidon::circuit_hash`].
pub fn poseidon_hash(cs: &mut CircuitBuilder, inputs: &[Num]) -> Num {
    assert!(!inputs.is_empty(), "hash input must be non-empty");
    if inputs.len() < MAX_WIDTH {
        let params = poseidon::params(inputs.len() + 1);
        let mut state = Vec::with_capacity(inputs.len() + 1);
        state.push(Num::zero());
        state.extend(inputs.iter().cloned());
        permute(cs, params, &mut state);
        return state.swap_remove(0);
    }
    let params = poseidon::params(MAX_WIDTH);
    let mut state = vec![Num::zero(); MAX_WIDTH];
    state[0] = Num::constant(Fr::from(inputs.len() as u64));
    for chunk in inputs.chunks(SPONGE_RATE) {
        for (lane, x) in state[1..].iter_mut().zip(chunk) {
            *lane = lane.add(x);
        }
        permute(cs, params, &mut state);
    }
    state.swap_remove(0)
}

/// `p - 1` for the BN254 scalar field.
pub fn field_max() -> BigUint {
    field_to_biguint(&-Fr::one())
}

pub fn bits_value(bits: &[Num]) -> BigUint {
    let le: Vec<bool> = bits.iter().map(|b| b.value.is_one()).collect();
    BigUint::from_bytes_le(&<Fr as PrimeField>::BigInt::from_bits_le(&le).to_bytes_le())
}

pub fn fr_from_biguint(v: &BigUint) -> Fr {
    biguint_to_field(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::babyjubjub::BabyJubjub;
    use crate::eddsa::SigningKeyPair;
    use ark_ff::Zero;

    fn satisfied(cs: CircuitBuilder) -> bool {
        let (cs, w) = cs.finish();
        cs.evaluate(&w).unwrap()
    }

    #[test]
    fn bounded_bits_accept_bound_and_reject_above() {
        let bound = BigUint::from(0b1011_0110u32);
        for v in 0u32..=255 {
            let mut cs = CircuitBuilder::new();
            let x = cs.alloc(Fr::from(v));
            let bits = to_bits_le_bounded(&mut cs, &x, &bound);
            if v < 256 && (v as u64) < (1 << bound.bits()) {
                assert_eq!(bits_value(&bits), BigUint::from(v));
            }
            let ok = satisfied(cs);
            assert_eq!(ok, BigUint::from(v) <= bound, "v = {v}");
        }
    }

    #[test]
    fn field_bits_reject_non_canonical_decomposition() {
        // x = 5 has the alternative 254-bit decomposition 5 + p, which must fail.
        let mut cs = CircuitBuilder::new();
        let x = cs.alloc(Fr::from(5u64));
        let bits = to_bits_le_bounded(&mut cs, &x, &field_max());
        let (sys, mut w) = cs.finish();
        assert!(sys.evaluate(&w).unwrap());
        let alt = BigUint::from(5u32) + field_max() + 1u32;
        assert!(alt.bits() <= 254);
        let bit_index = |b: &Num| match b.terms[0].0 {
            crate::r1cs::Var::Private(i) => 1 + sys.num_public + i,
            _ => unreachable!(),
        };
        for (i, b) in bits.iter().enumerate() {
            w.0[bit_index(b)] = Fr::from(u64::from(alt.bit(i as u64)));
        }
        assert!(!sys.evaluate(&w).unwrap());
    }

    #[test]
    fn point_gadgets_match_native_arithmetic() {
        let g = Point::generator();
        let p = g.mul(&BigUint::from(12345u32));
        let q = g.mul(&BigUint::from(999u32));
        let mut cs = CircuitBuilder::new();
        let pv = PointVar { x: cs.alloc(p.x), y: cs.alloc(p.y) };
        let qv = PointVar { x: cs.alloc(q.x), y: cs.alloc(q.y) };
        enforce_on_curve(&mut cs, &pv);
        let sum = add_points(&mut cs, &pv, &qv);
        assert_eq!(sum.value(), p.add(&q));
        let doubled = add_points(&mut cs, &pv, &pv);
        assert_eq!(doubled.value(), p.double());

        let k = BigUint::from(0xdead_beefu64);
        let kv = cs.alloc(fr_from_biguint(&k));
        let bits = to_bits_le_bounded(&mut cs, &kv, babyjubjub::subgroup_order());
        assert_eq!(mul_point(&mut cs, &bits, &pv).value(), p.mul(&k));
        assert_eq!(mul_generator(&mut cs, &bits).value(), g.mul(&k));
        assert!(satisfied(cs));
    }

    #[test]
    fn off_curve_point_is_unsatisfiable() {
        let mut cs = CircuitBuilder::new();
        let pv = PointVar { x: cs.alloc(Fr::from(1u64)), y: cs.alloc(Fr::from(2u64)) };
        enforce_on_curve(&mut cs, &pv);
        assert!(!satisfied(cs));
    }

    #[test]
    fn prime_order_check_rejects_torsion_component() {
        let kp = SigningKeyPair::<BabyJubjub>::generate(&[9u8; 32]).unwrap();
        let mut cs = CircuitBuilder::new();
        let pv = PointVar { x: cs.alloc(kp.pk.x), y: cs.alloc(kp.pk.y) };
        enforce_prime_order(&mut cs, &pv);
        assert!(satisfied(cs));

        let torsion = Point::new_unchecked(Fr::zero(), -Fr::one());
        let shifted = kp.pk.add(&torsion);
        let mut cs = CircuitBuilder::new();
        let pv = PointVar { x: cs.alloc(shifted.x), y: cs.alloc(shifted.y) };
        enforce_prime_order(&mut cs, &pv);
        assert!(!satisfied(cs));
    }

    #[test]
    fn poseidon_gadget_matches_native_hash() {
        for len in [1usize, 2, 5, 6, 11] {
            let xs: Vec<Fr> = (0..len as u64).map(|i| Fr::from(i * 7 + 3)).collect();
            let mut cs = CircuitBuilder::new();
            let vars: Vec<Num> = xs.iter().map(|x| cs.alloc(*x)).collect();
            let h = poseidon_hash(&mut cs, &vars);
            assert_eq!(h.value, poseidon::circuit_hash(&xs), "len = {len}");
            assert!(satisfied(cs));
        }
    }
}
