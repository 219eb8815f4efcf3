//! Ceremony properties on a small program: independent ceremonies yield
//! incompatible keys, no secret share reaches a published byte, and the
//! phase-1 powers satisfy their pairing relations.

use ark_bn254::{Bn254, Fr, G1Affine, G2Affine};
use ark_ec::pairing::Pairing;
use ark_ec::AffineRepr;
use ark_ff::{BigInteger, PrimeField};
use expresso_core::artifacts::{run_ceremony, ZkArtifacts};
use expresso_core::ceremony::{
    contribute, phase1_generate, reveal_beacon_shares, reveal_contribution_shares, verify_key_against_transcript,
    verify_transcript, CeremonyState, CeremonyTranscript, Phase1Parameters,
};
use expresso_core::circuit::{compile, synthesize, BoilerplateProgram, Inputs, Parameter, Value, ValueType, Visibility};
use expresso_core::encoding::Encode;
use expresso_core::groth16::{self, domain_size};
use expresso_core::poseidon::circuit_hash;
use expresso_core::r1cs::{ConstraintSystem, WitnessVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn preimage_program() -> BoilerplateProgram {
    BoilerplateProgram::new(
        "def main(public field h, private field a, private field b) {\n    field x = hash(a, b);\n    assert_eq(x, h);\n}\n",
        vec![
            Parameter::new("h", Visibility::Public, ValueType::Field),
            Parameter::new("a", Visibility::Private, ValueType::Field),
            Parameter::new("b", Visibility::Private, ValueType::Field),
        ],
    )
}

fn witness(program: &BoilerplateProgram, a: u64, b: u64) -> (Fr, WitnessVector) {
    let h = circuit_hash(&[Fr::from(a), Fr::from(b)]);
    let inputs = Inputs::from([
        ("h".to_string(), Value::Field(h)),
        ("a".to_string(), Value::Field(Fr::from(a))),
        ("b".to_string(), Value::Field(Fr::from(b))),
    ]);
    (h, synthesize(program, &inputs).unwrap().1)
}

struct Setup {
    program: BoilerplateProgram,
    cs: ConstraintSystem,
    phase1: Phase1Parameters,
    initial: CeremonyState,
}

fn setup() -> Setup {
    let program = preimage_program();
    let cs = compile(&program).unwrap();
    let phase1 = phase1_generate(domain_size(&cs).unwrap(), b"properties").unwrap();
    let initial = CeremonyState::initialize(&phase1, &cs, program.program_digest).unwrap();
    Setup { program, cs, phase1, initial }
}

fn ceremony(s: &Setup, tag: &str) -> (ZkArtifacts, CeremonyTranscript) {
    let contributors: Vec<(String, Vec<u8>)> =
        (0..2).map(|i| (format!("{tag}-{i}"), format!("{tag}-entropy-{i}").into_bytes())).collect();
    run_ceremony(&s.initial, &contributors, format!("{tag}-beacon").as_bytes(), "fixed", &s.cs, 1).unwrap()
}

#[test]
fn independent_ceremonies_do_not_cross_verify() {
    let s = setup();
    let (a, ta) = ceremony(&s, "first");
    let (b, tb) = ceremony(&s, "second");
    assert_ne!(a.verification_key, b.verification_key);
    verify_transcript(&ta, &s.phase1).unwrap();
    verify_transcript(&tb, &s.phase1).unwrap();

    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (h, w) = witness(&s.program, 3, 4);
    let proof_a = groth16::prove(&a.proving_key, &w, &mut rng).unwrap();
    let proof_b = groth16::prove(&b.proving_key, &w, &mut rng).unwrap();
    assert!(groth16::verify(&a.verification_key, &[h], &proof_a));
    assert!(groth16::verify(&b.verification_key, &[h], &proof_b));
    assert!(!groth16::verify(&a.verification_key, &[h], &proof_b));
    assert!(!groth16::verify(&b.verification_key, &[h], &proof_a));

    // Each key is bound to its own transcript.
    assert!(verify_key_against_transcript(&a.proving_key, &s.initial, &ta, &mut rng).is_ok());
    assert!(verify_key_against_transcript(&b.proving_key, &s.initial, &ta, &mut rng).is_err());
    assert!(verify_key_against_transcript(&a.proving_key, &s.initial, &tb, &mut rng).is_err());
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn published_bytes_contain_no_secret_shares() {
    let s = setup();
    let entropies: [&[u8]; 2] = [b"share-leak-entropy-0", b"share-leak-entropy-1"];
    let mut state = s.initial.clone();
    let mut secrets = Vec::new();
    for (i, e) in entropies.iter().enumerate() {
        let (d, g) = reveal_contribution_shares(&state, e);
        secrets.extend([d, g]);
        state = contribute(&state, &format!("p{i}"), e).unwrap().0;
    }
    let (artifacts, transcript) =
        expresso_core::artifacts::finalize(&state, b"leak-beacon", "fixed", &s.cs, 1).unwrap();

    let mut published = artifacts.to_bytes();
    published.extend(transcript.to_bytes());
    published.extend(transcript.manifest().into_bytes());
    for secret in &secrets {
        for bytes in [secret.into_bigint().to_bytes_le(), secret.into_bigint().to_bytes_be()] {
            assert!(!contains(&published, &bytes[..16]), "share bytes leaked");
        }
    }
    for e in entropies {
        assert!(!contains(&published, e), "entropy leaked");
    }
    // Shares are distinct per contributor.
    for (i, x) in secrets.iter().enumerate() {
        assert!(!secrets[i + 1..].contains(x));
    }
    // The beacon's shares are public by construction and differ from all of them.
    let (bd, bg) = reveal_beacon_shares(&state, b"leak-beacon");
    assert!(!secrets.contains(&bd) && !secrets.contains(&bg));
}

#[test]
fn phase1_powers_satisfy_pairing_relations() {
    let s = setup();
    let p = &s.phase1;
    let g1 = G1Affine::generator();
    let g2 = G2Affine::generator();
    let tau_g2 = p.tau_powers_g2[1];
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for _ in 0..10 {
        let i = rng.gen_range(0..p.tau_powers_g1.len() - 1);
        assert_eq!(
            Bn254::pairing(p.tau_powers_g1[i + 1], g2),
            Bn254::pairing(p.tau_powers_g1[i], tau_g2),
            "tau power {i}"
        );
        let j = rng.gen_range(0..p.degree);
        assert_eq!(Bn254::pairing(p.tau_powers_g1[j], g2), Bn254::pairing(g1, p.tau_powers_g2[j]));
        assert_eq!(
            Bn254::pairing(p.beta_tau_g1[j], g2),
            Bn254::pairing(p.tau_powers_g1[j], p.beta_g2),
            "beta power {j}"
        );
        // alpha * tau^j against alpha * tau^0 and tau^j.
        assert_eq!(
            Bn254::pairing(p.alpha_tau_g1[j], g2),
            Bn254::pairing(p.alpha_tau_g1[0], p.tau_powers_g2[j]),
            "alpha power {j}"
        );
    }
}
