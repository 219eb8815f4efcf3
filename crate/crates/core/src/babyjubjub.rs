//! Baby Jubjub: the twisted Edwards curve whose base field is the BN254
//! scalar field, so its arithmetic is native inside BN254 circuits.
//!
//! `a = 168700`, `d = 168696`, cofactor 8. The base point is the standard
//! prime-order generator `B8`.

use std::str::FromStr;
use std::sync::OnceLock;

use ark_bn254::Fr;
use num_bigint::BigUint;

use crate::edwards::{self, EdwardsParams};
use crate::poseidon::circuit_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BabyJubjub;

pub type Point = edwards::Point<BabyJubjub>;

pub const COEFF_A: u64 = 168_700;
pub const COEFF_D: u64 = 168_696;

const SUBGROUP_ORDER: &str =
    "2736030358979909402780800718157159386076813972158567259200215660948447373041";
const BASE_X: &str =
    "5299619240641551281634865583518297030282874472190772894086521144482721001553";
const BASE_Y: &str =
    "16950150798460657717958625567821834550301663161624707787222815936182638968203";

pub fn subgroup_order() -> &'static BigUint {
    static ORDER: OnceLock<BigUint> = OnceLock::new();
    ORDER.get_or_init(|| BigUint::from_str(SUBGROUP_ORDER).unwrap())
}

impl EdwardsParams for BabyJubjub {
    type Field = Fr;

    fn a() -> Fr {
        Fr::from(COEFF_A)
    }

    fn d() -> Fr {
        Fr::from(COEFF_D)
    }

    fn base_point() -> (Fr, Fr) {
        static BASE: OnceLock<(Fr, Fr)> = OnceLock::new();
        *BASE.get_or_init(|| (Fr::from_str(BASE_X).unwrap(), Fr::from_str(BASE_Y).unwrap()))
    }

    fn subgroup_order() -> BigUint {
        subgroup_order().clone()
    }

    fn cofactor() -> u64 {
        8
    }

    fn challenge_hash(inputs: &[Fr]) -> Fr {
        circuit_hash(inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ark_ff::{Field, LegendreSymbol};
    use num_bigint::BigUint;

    #[test]
    fn base_point_has_prime_order() {
        let g = Point::generator();
        assert!(g.is_on_curve());
        assert!(!g.is_identity());
        assert!(g.mul(subgroup_order()).is_identity());
        assert!(probably_prime(subgroup_order()));
    }

    #[test]
    fn addition_law_is_complete() {
        assert_eq!(Fr::from(COEFF_A).legendre(), LegendreSymbol::QuadraticResidue);
        assert_eq!(Fr::from(COEFF_D).legendre(), LegendreSymbol::QuadraticNonResidue);
    }

    fn probably_prime(n: &BigUint) -> bool {
        let one = BigUint::from(1u32);
        let n1 = n - &one;
        let s = n1.trailing_zeros().unwrap();
        let d = &n1 >> s;
        'witness: for a in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
            let mut x = BigUint::from(a).modpow(&d, n);
            if x == one || x == n1 {
                continue;
            }
            for _ in 1..s {
                x = x.modpow(&BigUint::from(2u32), n);
                if x == n1 {
                    continue 'witness;
                }
            }
            return false;
        }
        true
    }
}
