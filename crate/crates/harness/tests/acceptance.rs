//! End-to-end acceptance run. Every criterion prints one PASS/FAIL line; the
//! process exits nonzero if any of them fails. Runs without the libtest
//! harness so the lines are never captured.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use ark_bn254::Fr;
use ark_ff::{BigInteger, One, PrimeField, UniformRand};
use expresso_core::artifacts::run_ceremony;
use expresso_core::babyjubjub::{subgroup_order, BabyJubjub, Point};
use expresso_core::ceremony::{phase1_generate, verify_transcript, CeremonyState, TranscriptError};
use expresso_core::circuit::{
    compile, membership_inputs, membership_public_inputs, synthesize, BoilerplateProgram, Parameter, ValueType,
    Visibility,
};
use expresso_core::credential::ClientCredential;
use expresso_core::eddsa::{Signature, SigningKeyPair};
use expresso_core::groth16::{self, domain_size, ProvingKey};
use expresso_core::membership::MAX_PROOF_PAYLOAD;
use expresso_core::r1cs::{ConstraintSystem, WitnessVector};
use expresso_harness::attack;
use expresso_harness::bench::{self, mean, REFERENCE};
use expresso_harness::deploy::{Deployment, DeploymentConfig, Setup, UserSpec, AGENT_HOST};
use num_bigint::BigUint;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const COMPLETENESS_CYCLES: usize = 50;
const COMPLETENESS_BUDGET: Duration = Duration::from_secs(600);
const SOUNDNESS_MUTATIONS: usize = 200;
const SOUNDNESS_UNCHECKED: usize = 20;
const INTEGRITY_TRIALS: usize = 20;
const COLLUSION_USERS: usize = 100;
const COLLUSION_REPEATS: usize = 3;
const REVOCATION_TRIALS: usize = 20;
const ORACLE_INSTANCES: usize = 100;
const LATENCY_RUNS: usize = 50;
const MAX_VERIFY_MS: f64 = 500.0;
const MAX_LOGIN_MS: f64 = 1000.0;
const PROVING_FACTOR: f64 = 10.0;
const SCALING_RATIO: usize = 4;
const SCALING_TOLERANCE: f64 = 0.25;

struct Ledger(Vec<(usize, bool)>);

impl Ledger {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n:>2}: {}  {detail}", if pass { "PASS" } else { "FAIL" });
        self.0.push((n, pass));
    }

    fn failed(&self) -> Vec<usize> {
        self.0.iter().filter(|(_, p)| !p).map(|(n, _)| *n).collect()
    }
}

fn issue(key: &SigningKeyPair<BabyJubjub>, client_id: Fr) -> ClientCredential {
    ClientCredential {
        client_id,
        signature: key.sign(&client_id),
        idp_credential_pk: key.pk,
    }
}

const MUTATIONS: usize = 9;

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
            c.signature = Signature {
                r: c.signature.r.neg(),
                s: c.signature.s.clone(),
            }
        }
    }
    c
}

/// Outcome of the full prover/verifier pipeline on one witness: `prove`
/// must refuse exactly the unsatisfying witnesses, and a proof forced out of
/// an unsatisfying witness must not verify.
fn groth16_accepts(pk: &ProvingKey, public: &[Fr], w: &WitnessVector, rng: &mut StdRng) -> bool {
    match groth16::prove(pk, w, rng) {
        Ok(proof) => groth16::verify(&pk.vk, public, &proof),
        Err(_) => {
            let forced = groth16::prove_unchecked(pk, w, rng).expect("witness has the key's length");
            assert!(!groth16::verify(&pk.vk, public, &forced), "forced proof of a false statement verified");
            false
        }
    }
}

fn membership_witness(cred: &ClientCredential) -> Option<WitnessVector> {
    synthesize(&BoilerplateProgram::membership(), &membership_inputs(cred)).ok().map(|(_, w)| w)
}

fn soundness(pk: &ProvingKey, rng: &mut StdRng) -> (usize, usize, String) {
    let key = SigningKeyPair::<BabyJubjub>::generate(&rng.gen::<[u8; 32]>()).unwrap();
    let public = membership_public_inputs(&key.pk);
    let mut rejected = 0;
    let mut unchecked = 0;
    for i in 0..SOUNDNESS_MUTATIONS {
        let cred = issue(&key, Fr::rand(rng));
        let witness = if i % 2 == 0 {
            // Mutated credential.
            membership_witness(&mutate(&cred, (i / 2) % MUTATIONS, rng))
        } else {
            // Honest witness with one private wire changed.
            membership_witness(&cred).map(|mut w| {
                let j = rng.gen_range(pk.cs.num_public + 1..w.0.len());
                w.0[j] += Fr::from(rng.gen_range(1u64..1 << 32));
                w
            })
        };
        let Some(w) = witness else {
            rejected += 1;
            continue;
        };
        if groth16::prove(pk, &w, rng).is_err() {
            rejected += 1;
            if unchecked < SOUNDNESS_UNCHECKED {
                let forced = groth16::prove_unchecked(pk, &w, rng).unwrap();
                if !groth16::verify(&pk.vk, &public, &forced) {
                    unchecked += 1;
                }
            }
        }
    }
    let detail = format!(
        "{rejected}/{SOUNDNESS_MUTATIONS} mutations rejected, {unchecked}/{SOUNDNESS_UNCHECKED} forced proofs failed verification"
    );
    (rejected, unchecked, detail)
}

fn oracle_equivalence(cs: &ConstraintSystem, pk: &ProvingKey, rng: &mut StdRng) -> (usize, usize, usize) {
    let key = SigningKeyPair::<BabyJubjub>::generate(&rng.gen::<[u8; 32]>()).unwrap();
    let public = membership_public_inputs(&key.pk);
    let (mut agree, mut valid, mut invalid) = (0, 0, 0);
    for i in 0..ORACLE_INSTANCES {
        let honest = issue(&key, Fr::rand(rng));
        let cred = if i % 2 == 0 { honest } else { mutate(&honest, rng.gen_range(0..MUTATIONS), rng) };
        let (evaluated, proved) = match synthesize(&BoilerplateProgram::membership(), &membership_inputs(&cred)) {
            Ok((synthesized, w)) => {
                assert_eq!(&synthesized, cs);
                (cs.evaluate(&w).unwrap(), groth16_accepts(pk, &public, &w, rng))
            }
            // Inputs the circuit cannot even represent are rejected by both.
            Err(_) => (false, false),
        };
        if evaluated {
            valid += 1;
        } else {
            invalid += 1;
        }
        if evaluated == proved && evaluated == cred.is_valid() {
            agree += 1;
        }
    }
    (agree, valid, invalid)
}

fn ceremony_checks(setup: &Setup) -> Vec<(&'static str, bool, String)> {
    let cs = compile(&setup.program).unwrap();
    let contributors = |tag: &str| -> Vec<(String, Vec<u8>)> {
        (0..3).map(|i| (format!("{tag}-{i}"), format!("{tag}-entropy-{i}").into_bytes())).collect()
    };
    let (_, honest) = run_ceremony(&setup.initial, &contributors("acc"), b"acc-beacon", "fixed", &cs, 1).unwrap();
    let (_, other) = run_ceremony(&setup.initial, &contributors("alt"), b"alt-beacon", "fixed", &cs, 1).unwrap();
    let mut out = Vec::new();

    let r = verify_transcript(&honest, &setup.phase1);
    out.push(("honest", r.is_ok() && honest.records.len() == 4, format!("{r:?}")));

    let mut spliced = honest.clone();
    spliced.records[2].update = other.records[2].update.clone();
    let r = verify_transcript(&spliced, &setup.phase1);
    out.push(("spliced", r.as_ref().err().and_then(TranscriptError::record) == Some(2), format!("{r:?}")));

    let mut reordered = honest.clone();
    reordered.records.swap(1, 2);
    let r = verify_transcript(&reordered, &setup.phase1);
    out.push(("reordered", r.as_ref().err().and_then(TranscriptError::record) == Some(1), format!("{r:?}")));

    let mut unbeaconed = honest.clone();
    unbeaconed.records.pop();
    unbeaconed.final_digest = unbeaconed.records.last().unwrap().running_digest;
    let r = verify_transcript(&unbeaconed, &setup.phase1);
    out.push(("missing beacon", r == Err(TranscriptError::MissingBeacon), format!("{r:?}")));

    let mut phase1 = setup.phase1.clone();
    let k = phase1.tau_powers_g1.len() / 2;
    phase1.tau_powers_g1[k] = phase1.tau_powers_g1[k + 1];
    let r = verify_transcript(&honest, &phase1);
    out.push(("tampered phase-1", r.as_ref().err().and_then(TranscriptError::record) == Some(0), format!("{r:?}")));
    out
}

fn small_variant() -> BoilerplateProgram {
    BoilerplateProgram::new(
        "def main(public point pk, private field M) {\n    assert_on_curve(pk);\n    field h = hash(pk, M);\n}\n",
        vec![
            Parameter::new("pk", Visibility::Public, ValueType::Point),
            Parameter::new("M", Visibility::Private, ValueType::Field),
        ],
    )
}

struct Scaling {
    large_constraints: usize,
    small_constraints: usize,
    large_ms: f64,
    small_ms: f64,
}

fn scaling(large: &ProvingKey, rng: &mut StdRng) -> Scaling {
    let key = SigningKeyPair::<BabyJubjub>::generate(&rng.gen::<[u8; 32]>()).unwrap();
    let public = membership_public_inputs(&key.pk);

    let cred = issue(&key, Fr::rand(rng));
    let w = membership_witness(&cred).unwrap();
    let large_proof = groth16::prove(large, &w, rng).unwrap();

    let program = small_variant();
    let small_cs = compile(&program).unwrap();
    let phase1 = phase1_generate(domain_size(&small_cs).unwrap(), b"small variant").unwrap();
    let initial = CeremonyState::initialize(&phase1, &small_cs, program.program_digest).unwrap();
    let contributors = vec![("small".to_string(), b"small-entropy".to_vec())];
    let (small, _) = run_ceremony(&initial, &contributors, b"small-beacon", "fixed", &small_cs, 1).unwrap();
    let mut inputs = membership_inputs(&cred);
    inputs.retain(|k, _| k == "pk" || k == "M");
    let (_, sw) = synthesize(&program, &inputs).unwrap();
    let small_proof = groth16::prove(&small.proving_key, &sw, rng).unwrap();

    let large_pvk = large.vk.prepare();
    let small_pvk = small.verification_key.prepare();
    let time = |pvk, proof| {
        let t = Instant::now();
        groth16::verify_prepared(pvk, &public, proof).expect("honest proof verifies");
        t.elapsed().as_secs_f64() * 1e3
    };
    for _ in 0..5 {
        time(&large_pvk, &large_proof);
        time(&small_pvk, &small_proof);
    }
    let (mut l, mut s) = (Vec::new(), Vec::new());
    for _ in 0..LATENCY_RUNS {
        l.push(time(&large_pvk, &large_proof));
        s.push(time(&small_pvk, &small_proof));
    }
    Scaling {
        large_constraints: large.cs.num_constraints(),
        small_constraints: small_cs.num_constraints(),
        large_ms: mean(&l),
        small_ms: mean(&s),
    }
}

fn main() -> std::process::ExitCode {
    // `cargo test -- <filter>` passes its arguments through; honour a filter
    // that does not name this target so unrelated runs stay fast.
    if let Some(filter) = std::env::args().skip(1).find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return std::process::ExitCode::SUCCESS;
        }
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    if runtime.block_on(acceptance()) {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}

async fn acceptance() -> bool {
    let mut ledger = Ledger(Vec::new());
    let started = Instant::now();

    let setup = tokio::task::block_in_place(|| Setup::membership(&["c1", "c2", "c3"], b"acceptance")).unwrap();
    let config = DeploymentConfig {
        pool_size: 5,
        pbkdf2_rounds: 1000,
        users: (0..COLLUSION_USERS)
            .map(|i| UserSpec::new(&format!("user{i}"), &format!("password-{i}")))
            .collect(),
        ..DeploymentConfig::default()
    };
    let dep = Deployment::start(config, setup.source.clone()).await.unwrap();

    // 1. Completeness.
    let rps = ["rp-a", "rp-b", "rp-c"];
    let mut rng = StdRng::seed_from_u64(0xacc);
    let mut ok = 0;
    for rp in rps {
        dep.add_rp(rp).await.unwrap();
    }
    for _ in 0..COMPLETENESS_CYCLES {
        let user = format!("user{}", rng.gen_range(0..5));
        let rp = rps[rng.gen_range(0..rps.len())];
        match dep.login(&user, rp, &["email", "name"]).await.unwrap() {
            Ok(outcome) if outcome.claims.get("email") == Some(&format!("{user}@example.org")) => ok += 1,
            other => println!("  {user}@{rp}: {other:?}"),
        }
    }
    let elapsed = started.elapsed();
    ledger.record(
        1,
        ok == COMPLETENESS_CYCLES && elapsed < COMPLETENESS_BUDGET,
        format!("{ok}/{COMPLETENESS_CYCLES} logins across 3 RPs and 5 users, {:.1}s including setup", elapsed.as_secs_f64()),
    );

    // 3a. Public inputs are the same for every RP.
    let mut inputs = HashSet::new();
    for rp in rps {
        let proof = dep.rp(rp).unwrap().rp.generate_proof().await.unwrap();
        let bytes: Vec<u8> = proof.public_inputs.iter().flat_map(|x| x.into_bigint().to_bytes_le()).collect();
        inputs.insert(bytes);
    }
    let identical_inputs = inputs.len() == 1;

    // 8-11. Sizes and latencies.
    let report = bench::run(&dep, "rp-bench", "user0", LATENCY_RUNS).await.unwrap();
    ledger.record(
        8,
        report.proof_bytes <= MAX_PROOF_PAYLOAD,
        format!("proof payload {} bytes (limit {MAX_PROOF_PAYLOAD})", report.proof_bytes),
    );
    ledger.record(
        9,
        report.verification_ms <= MAX_VERIFY_MS,
        format!("mean verification {:.2} ms over {LATENCY_RUNS} runs (limit {MAX_VERIFY_MS})", report.verification_ms),
    );
    ledger.record(
        10,
        report.user_auth_ms <= MAX_LOGIN_MS,
        format!("mean cached-proof login {:.2} ms over {LATENCY_RUNS} runs (limit {MAX_LOGIN_MS})", report.user_auth_ms),
    );
    let proving_limit = REFERENCE.proving_ms * PROVING_FACTOR;
    ledger.record(
        11,
        report.proving_ms <= proving_limit,
        format!(
            "proving {:.0} ms (limit {proving_limit:.0}) at {} constraints, reference {} constraints",
            report.proving_ms, report.constraints, REFERENCE.constraints
        ),
    );

    // 4. Unlinkability across colluding RPs.
    let users: Vec<String> = (0..COLLUSION_USERS).map(|i| format!("user{i}")).collect();
    let c = attack::collusion(&dep, "rp-a", "rp-b", &users, COLLUSION_REPEATS).await.unwrap();
    ledger.record(
        4,
        c.holds(),
        format!(
            "{}/{} users unlinkable, {}/{} (user, RP) pairs stable over {} logins, {} distinct subjects",
            c.unlinkable,
            c.users,
            c.deterministic,
            2 * c.users,
            c.repeats,
            c.distinct_subjects
        ),
    );

    // 5. Revocation.
    let remaining = vec!["rp-a".to_string(), "rp-b".to_string(), "rp-bench".to_string()];
    let r = attack::revocation(&dep, "rp-c", &remaining, "user1", REVOCATION_TRIALS).await.unwrap();
    ledger.record(
        5,
        r.holds(),
        format!(
            "{}/{} replayed or re-proved attempts rejected ({:?}), refresh denied: {}, {}/{} remaining RPs logged in",
            r.rejected,
            r.trials,
            r.rejection_codes.iter().collect::<HashSet<_>>(),
            r.revoked_refresh_denied,
            r.remaining_ok,
            r.remaining
        ),
    );

    // 3b and 3c. Run after rotation so stale artifacts exist.
    let integrity = attack::integrity(&dep, setup.source.clone(), INTEGRITY_TRIALS).await.unwrap();
    for rp in &remaining {
        dep.login("user2", rp, &["email"]).await.unwrap().unwrap();
    }
    let peers = dep.authentication_peers();
    let from_rps = dep.rp_addresses_in_idp_log();
    let all_agent = peers.iter().all(|ip| *ip == AGENT_HOST);
    ledger.record(
        3,
        identical_inputs && integrity.holds() && from_rps == 0 && all_agent && !peers.is_empty(),
        format!(
            "public inputs identical: {identical_inputs}; substitutions detected {}/{} {:?}, control ok: {}; \
             {} authentication requests, {from_rps} from an RP address",
            integrity.detected,
            integrity.trials,
            integrity.by_substitution,
            integrity.control_passed,
            peers.len()
        ),
    );

    // Offline criteria use the keys the deployment is running on.
    let pk = dep.idp.active_artifacts().unwrap().artifacts.proving_key.clone();
    let (soundness, oracle, ceremony, scaling) = tokio::task::block_in_place(|| {
        let mut rng = StdRng::seed_from_u64(0x50d);
        let cs = compile(&BoilerplateProgram::membership()).unwrap();
        (
            soundness(&pk, &mut rng),
            oracle_equivalence(&cs, &pk, &mut rng),
            ceremony_checks(&setup),
            scaling(&pk, &mut rng),
        )
    });

    // 2. Soundness.
    let (rejected, unchecked, detail) = soundness;
    ledger.record(2, rejected == SOUNDNESS_MUTATIONS && unchecked == SOUNDNESS_UNCHECKED, detail);

    // 6. Ceremony verifiability.
    let ceremony_ok = ceremony.iter().all(|(_, ok, _)| *ok);
    let summary: Vec<String> = ceremony.iter().map(|(case, ok, r)| format!("{case}: {} ({r})", if *ok { "ok" } else { "wrong" })).collect();
    ledger.record(6, ceremony_ok, summary.join("; "));

    // 7. Constraint evaluation agrees with Groth16.
    let (agree, valid, invalid) = oracle;
    ledger.record(
        7,
        agree == ORACLE_INSTANCES && valid > 0 && invalid > 0,
        format!("{agree}/{ORACLE_INSTANCES} agree ({valid} valid, {invalid} invalid)"),
    );

    // 12. Verification does not grow with the circuit.
    let s = scaling;
    let spread = (s.large_ms - s.small_ms).abs() / s.large_ms.min(s.small_ms);
    ledger.record(
        12,
        s.large_constraints >= SCALING_RATIO * s.small_constraints && spread < SCALING_TOLERANCE,
        format!(
            "{} vs {} constraints, mean verification {:.3} vs {:.3} ms, spread {:.1}% (limit {:.0}%)",
            s.large_constraints,
            s.small_constraints,
            s.large_ms,
            s.small_ms,
            spread * 100.0,
            SCALING_TOLERANCE * 100.0
        ),
    );

    ledger.0.sort();
    let failed = ledger.failed();
    println!("acceptance: {}/{} criteria passed", ledger.0.len() - failed.len(), ledger.0.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
    }
    failed.is_empty()
}
