//! The membership circuit and the native verifier agree on honest and
//! mutated credentials.

use ark_bn254::Fr;
use ark_ff::{One, UniformRand};
use expresso_core::babyjubjub::{subgroup_order, BabyJubjub, Point};
use expresso_core::circuit::{compile, membership_inputs, synthesize, BoilerplateProgram};
use expresso_core::credential::ClientCredential;
use expresso_core::eddsa::{Signature, SigningKeyPair};
use expresso_core::r1cs::ConstraintSystem;
use num_bigint::BigUint;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn circuit_accepts(cs: &ConstraintSystem, cred: &ClientCredential) -> bool {
    match synthesize(&BoilerplateProgram::membership(), &membership_inputs(cred)) {
        Ok((synthesized, witness)) => {
            assert_eq!(&synthesized, cs, "structure must not depend on values");
            cs.evaluate(&witness).unwrap()
        }
        Err(_) => false,
    }
}

fn issue(key: &SigningKeyPair<BabyJubjub>, client_id: Fr) -> ClientCredential {
    ClientCredential {
        client_id,
        signature: key.sign(&client_id),
        idp_credential_pk: key.pk,
    }
}

fn mutate(cred: &ClientCredential, kind: usize, rng: &mut StdRng) -> ClientCredential {
    let mut c = cred.clone();
    let order = subgroup_order();
    let two_torsion = Point::new_unchecked(Fr::from(0u64), -Fr::one());
    match kind {
        0 => c.client_id += Fr::one(),
        1 => c.client_id = Fr::rand(rng),
        2 => c.signature.s = (&c.signature.s + 1u32) % order,
        3 => c.signature.s = &c.signature.s + order,
        4 => c.signature.r = c.signature.r.add(&Point::generator()),
        5 => c.signature.r = c.signature.r.add(&two_torsion),
        6 => c.signature.r = Point::new_unchecked(c.signature.r.x + Fr::one(), c.signature.r.y),
        7 => {
            let other = SigningKeyPair::<BabyJubjub>::from_scalar(BigUint::from(rng.gen::<u64>() | 1));
            c.signature = other.sign(&c.client_id);
        }
        _ => {
            // Negated nonce point.
            let forged = Signature {
                r: c.signature.r.neg(),
                s: c.signature.s.clone(),
            };
            c.signature = forged;
        }
    }
    c
}

#[test]
fn circuit_matches_native_verifier() {
    let cs = compile(&BoilerplateProgram::membership()).unwrap();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let key = SigningKeyPair::<BabyJubjub>::generate(&[9u8; 32]).unwrap();

    let mut honest = 0;
    let mut mutated = 0;
    for i in 0..100 {
        let cred = issue(&key, Fr::rand(&mut rng));
        assert!(cred.is_valid());
        assert!(circuit_accepts(&cs, &cred), "honest credential {i}");
        honest += 1;

        for kind in [i % 9, (i + 4) % 9] {
            let bad = mutate(&cred, kind, &mut rng);
            let native = bad.is_valid();
            assert_eq!(circuit_accepts(&cs, &bad), native, "instance {i} mutation {kind}");
            assert!(!native, "mutation {kind} should break the signature");
            mutated += 1;
        }
    }
    assert_eq!((honest, mutated), (100, 200));
}
