//! Two-phase trusted setup.
//!
//! Phase 1 produces circuit-independent powers of a secret `tau`, together
//! with their images in the Lagrange basis of the evaluation domain. Phase 2
//! specializes them to one constraint system and lets any number of parties
//! rerandomize `gamma` and `delta`; the proving key stays correct as long as
//! every party scales the dependent queries, and stays sound as long as one
//! party forgets its shares. Each contribution publishes a same-ratio proof
//! of knowledge checked with pairings against its predecessor.

use ark_bn254::{Bn254, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::Pairing;
use ark_ec::scalar_mul::ScalarMul;
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup, VariableBaseMSM};
use ark_ff::{BigInteger, Field, One, PrimeField, UniformRand, Zero};
use ark_poly::EvaluationDomain;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::groth16::{domain_for, qap_columns, Domain, ProvingKey, VerificationKey};
use crate::r1cs::{ConstraintSystem, Digest32};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CeremonyError {
    #[error("degree {degree} is too small; at least {required} is needed")]
    DegreeTooSmall { degree: usize, required: usize },
    #[error("degree must be a power of two, got {0}")]
    DegreeNotPowerOfTwo(usize),
    #[error("prior ceremony state is invalid: {0}")]
    InvalidPriorState(String),
    #[error("finalization needs at least one contribution")]
    EmptyCeremony,
    #[error("beacon value is empty")]
    EmptyBeacon,
    #[error("constraint system does not match the ceremony")]
    CircuitMismatch,
}

fn sha256_parts(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn rng_from(domain_tag: &str, parts: &[&[u8]]) -> ChaCha20Rng {
    let mut all: Vec<&[u8]> = vec![domain_tag.as_bytes()];
    all.extend_from_slice(parts);
    ChaCha20Rng::from_seed(sha256_parts(&all))
}

fn nonzero_scalar<R: RngCore>(rng: &mut R) -> Fr {
    loop {
        let x = Fr::rand(rng);
        if !x.is_zero() {
            return x;
        }
    }
}

/// Circuit-independent parameters for a domain of size `degree`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase1Parameters {
    pub degree: usize,
    /// `[tau^i]_1` for `i < 2*degree - 1`; the upper half feeds the quotient query.
    pub tau_powers_g1: Vec<G1Affine>,
    /// `[tau^i]_2` for `i < degree`.
    pub tau_powers_g2: Vec<G2Affine>,
    pub alpha_tau_g1: Vec<G1Affine>,
    pub beta_tau_g1: Vec<G1Affine>,
    pub beta_g2: G2Affine,
    /// `[L_j(tau)]_1` over the size-`degree` domain, and its alpha and beta multiples.
    pub lagrange_g1: Vec<G1Affine>,
    pub alpha_lagrange_g1: Vec<G1Affine>,
    pub beta_lagrange_g1: Vec<G1Affine>,
    pub lagrange_g2: Vec<G2Affine>,
}

#[cfg_attr(not(feature = "insecure-trapdoor"), allow(dead_code))]
pub struct Phase1Trapdoor {
    pub tau: Fr,
    pub alpha: Fr,
    pub beta: Fr,
}

/// Local stand-in for a public powers-of-tau transcript. The secrets are
/// dropped before returning.
pub fn phase1_generate(degree: usize, rng_seed: &[u8]) -> Result<Phase1Parameters, CeremonyError> {
    Ok(phase1_inner(degree, rng_seed)?.0)
}

/// Like [`phase1_generate`], but hands the secrets back for oracle checks.
#[cfg(feature = "insecure-trapdoor")]
pub fn phase1_generate_with_trapdoor(
    degree: usize,
    rng_seed: &[u8],
) -> Result<(Phase1Parameters, Phase1Trapdoor), CeremonyError> {
    phase1_inner(degree, rng_seed)
}

fn phase1_inner(degree: usize, rng_seed: &[u8]) -> Result<(Phase1Parameters, Phase1Trapdoor), CeremonyError> {
    if degree < 2 {
        return Err(CeremonyError::DegreeTooSmall { degree, required: 2 });
    }
    if !degree.is_power_of_two() {
        return Err(CeremonyError::DegreeNotPowerOfTwo(degree));
    }
    let mut rng = rng_from("expresso/phase1", &[rng_seed]);
    let t = Phase1Trapdoor {
        tau: nonzero_scalar(&mut rng),
        alpha: nonzero_scalar(&mut rng),
        beta: nonzero_scalar(&mut rng),
    };
    let domain = Domain::new(degree).expect("power of two");

    let mut powers = Vec::with_capacity(2 * degree - 1);
    let mut acc = Fr::one();
    for _ in 0..2 * degree - 1 {
        powers.push(acc);
        acc *= t.tau;
    }
    let lagrange = domain.evaluate_all_lagrange_coefficients(t.tau);
    let scaled = |xs: &[Fr], k: Fr| xs.iter().map(|x| *x * k).collect::<Vec<_>>();

    let g1 = G1Projective::generator();
    let g2 = G2Projective::generator();
    let params = Phase1Parameters {
        degree,
        tau_powers_g1: g1.batch_mul(&powers),
        tau_powers_g2: g2.batch_mul(&powers[..degree]),
        alpha_tau_g1: g1.batch_mul(&scaled(&powers[..degree], t.alpha)),
        beta_tau_g1: g1.batch_mul(&scaled(&powers[..degree], t.beta)),
        beta_g2: (g2 * t.beta).into_affine(),
        lagrange_g1: g1.batch_mul(&lagrange),
        alpha_lagrange_g1: g1.batch_mul(&scaled(&lagrange, t.alpha)),
        beta_lagrange_g1: g1.batch_mul(&scaled(&lagrange, t.beta)),
        lagrange_g2: g2.batch_mul(&lagrange),
    };
    Ok((params, t))
}

fn pairing_eq(a1: G1Affine, a2: G2Affine, b1: G1Affine, b2: G2Affine) -> bool {
    Bn254::multi_pairing([a1, (-b1.into_group()).into_affine()], [a2, b2]).is_zero()
}

impl Phase1Parameters {
    pub fn digest(&self) -> Digest32 {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Checks the whole parameter set with random linear combinations:
    /// consecutive powers share one ratio, and the Lagrange lists are the
    /// basis change of the monomial lists.
    pub fn verify<R: RngCore>(&self, rng: &mut R) -> Result<(), String> {
        let n = self.degree;
        if n < 2 || !n.is_power_of_two() {
            return Err("degree is not a power of two".into());
        }
        let lens = [
            (self.tau_powers_g1.len(), 2 * n - 1),
            (self.tau_powers_g2.len(), n),
            (self.alpha_tau_g1.len(), n),
            (self.beta_tau_g1.len(), n),
            (self.lagrange_g1.len(), n),
            (self.alpha_lagrange_g1.len(), n),
            (self.beta_lagrange_g1.len(), n),
            (self.lagrange_g2.len(), n),
        ];
        if lens.iter().any(|(a, b)| a != b) {
            return Err("list lengths do not match the degree".into());
        }
        let g1 = G1Affine::generator();
        let g2 = G2Affine::generator();
        if self.tau_powers_g1[0] != g1 || self.tau_powers_g2[0] != g2 {
            return Err("zeroth power is not the generator".into());
        }
        let tau_g2 = self.tau_powers_g2[1];
        let tau_g1 = self.tau_powers_g1[1];

        let ratio_g1 = |list: &[G1Affine], rng: &mut R| {
            let r: Vec<Fr> = (0..list.len() - 1).map(|_| Fr::rand(rng)).collect();
            let lo = G1Projective::msm_unchecked(&list[..list.len() - 1], &r).into_affine();
            let hi = G1Projective::msm_unchecked(&list[1..], &r).into_affine();
            pairing_eq(hi, g2, lo, tau_g2)
        };
        if !ratio_g1(&self.tau_powers_g1, rng) {
            return Err("G1 powers are not consecutive powers of tau".into());
        }
        if !ratio_g1(&self.alpha_tau_g1, rng) || !ratio_g1(&self.beta_tau_g1, rng) {
            return Err("alpha or beta powers are inconsistent with tau".into());
        }
        let r: Vec<Fr> = (0..n - 1).map(|_| Fr::rand(rng)).collect();
        let lo = G2Projective::msm_unchecked(&self.tau_powers_g2[..n - 1], &r).into_affine();
        let hi = G2Projective::msm_unchecked(&self.tau_powers_g2[1..], &r).into_affine();
        if !pairing_eq(g1, hi, tau_g1, lo) {
            return Err("G2 powers are not consecutive powers of tau".into());
        }
        if !pairing_eq(self.beta_tau_g1[0], g2, g1, self.beta_g2) {
            return Err("beta in G1 and G2 differ".into());
        }

        let domain = Domain::new(n).expect("power of two");
        let r: Vec<Fr> = (0..n).map(|_| Fr::rand(rng)).collect();
        let coeffs = domain.ifft(&r);
        let checks: [(&[G1Affine], &[G1Affine], &str); 3] = [
            (&self.lagrange_g1, &self.tau_powers_g1[..n], "Lagrange"),
            (&self.alpha_lagrange_g1, &self.alpha_tau_g1, "alpha Lagrange"),
            (&self.beta_lagrange_g1, &self.beta_tau_g1, "beta Lagrange"),
        ];
        for (lagrange, monomial, name) in checks {
            if G1Projective::msm_unchecked(lagrange, &r) != G1Projective::msm_unchecked(monomial, &coeffs) {
                return Err(format!("{name} list does not match the monomial list"));
            }
        }
        if G2Projective::msm_unchecked(&self.lagrange_g2, &r)
            != G2Projective::msm_unchecked(&self.tau_powers_g2, &coeffs)
        {
            return Err("G2 Lagrange list does not match the monomial list".into());
        }
        Ok(())
    }
}

const PHASE1_MAGIC: &[u8; 8] = b"XPRPOT01";

impl Encode for Phase1Parameters {
    fn encode(&self, w: &mut Writer) {
        w.raw(PHASE1_MAGIC);
        w.u64(self.degree as u64);
        w.vec(&self.tau_powers_g1, |w, p| w.g1(p));
        w.vec(&self.tau_powers_g2, |w, p| w.g2(p));
        w.vec(&self.alpha_tau_g1, |w, p| w.g1(p));
        w.vec(&self.beta_tau_g1, |w, p| w.g1(p));
        w.g2(&self.beta_g2);
        w.vec(&self.lagrange_g1, |w, p| w.g1(p));
        w.vec(&self.alpha_lagrange_g1, |w, p| w.g1(p));
        w.vec(&self.beta_lagrange_g1, |w, p| w.g1(p));
        w.vec(&self.lagrange_g2, |w, p| w.g2(p));
    }
}

impl Decode for Phase1Parameters {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.array::<8>()? != *PHASE1_MAGIC {
            return Err(DecodeError::Invalid("not a phase-1 parameter file".into()));
        }
        Ok(Self {
            degree: r.u64()? as usize,
            tau_powers_g1: r.vec(|r| r.g1())?,
            tau_powers_g2: r.vec(|r| r.g2())?,
            alpha_tau_g1: r.vec(|r| r.g1())?,
            beta_tau_g1: r.vec(|r| r.g1())?,
            beta_g2: r.g2()?,
            lagrange_g1: r.vec(|r| r.g1())?,
            alpha_lagrange_g1: r.vec(|r| r.g1())?,
            beta_lagrange_g1: r.vec(|r| r.g1())?,
            lagrange_g2: r.vec(|r| r.g2())?,
        })
    }
}

/// Multiplies by a field coefficient, taking the short path for the small
/// (or small negative) coefficients that dominate R1CS matrices.
fn mul_coeff<G: CurveGroup<ScalarField = Fr>>(p: G, c: &Fr) -> G {
    let small = |x: &Fr| {
        let b = x.into_bigint();
        (b.num_bits() <= 64).then(|| b.as_ref()[0])
    };
    if let Some(k) = small(c) {
        p.mul_bigint([k])
    } else if let Some(k) = small(&-*c) {
        -p.mul_bigint([k])
    } else {
        p * c
    }
}

fn column_sum<G: CurveGroup<ScalarField = Fr>>(col: &[(usize, Fr)], basis: &[G::Affine]) -> G {
    col.iter()
        .fold(G::zero(), |acc, (row, c)| acc + mul_coeff(basis[*row].into_group(), c))
}

/// Phase-2 state for one constraint system. The proving key it holds is
/// always usable; only its `gamma`/`delta` dependent parts change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CeremonyState {
    pub phase1_digest: Digest32,
    pub cs_digest: Digest32,
    pub program_digest: Digest32,
    pub key: ProvingKey,
    pub records: Vec<ContributionRecord>,
}

impl CeremonyState {
    /// Specializes phase 1 to `cs` with `gamma = delta = 1`. Deterministic,
    /// so every verifier can recompute it.
    pub fn initialize(
        phase1: &Phase1Parameters,
        cs: &ConstraintSystem,
        program_digest: Digest32,
    ) -> Result<Self, CeremonyError> {
        let required = domain_for(cs)
            .map_err(|_| CeremonyError::DegreeTooSmall {
                degree: phase1.degree,
                required: usize::MAX,
            })?
            .size();
        if phase1.degree < required {
            return Err(CeremonyError::DegreeTooSmall {
                degree: phase1.degree,
                required,
            });
        }
        let n = phase1.degree;
        let cols = qap_columns(cs);
        let public = cs.num_public + 1;

        let mut a_query = Vec::with_capacity(cs.num_variables);
        let mut b_g1 = Vec::with_capacity(cs.num_variables);
        let mut b_g2 = Vec::with_capacity(cs.num_variables);
        let mut combined = Vec::with_capacity(cs.num_variables);
        for k in 0..cs.num_variables {
            a_query.push(column_sum::<G1Projective>(&cols.a[k], &phase1.lagrange_g1));
            b_g1.push(column_sum::<G1Projective>(&cols.b[k], &phase1.lagrange_g1));
            b_g2.push(column_sum::<G2Projective>(&cols.b[k], &phase1.lagrange_g2));
            combined.push(
                column_sum::<G1Projective>(&cols.a[k], &phase1.beta_lagrange_g1)
                    + column_sum::<G1Projective>(&cols.b[k], &phase1.alpha_lagrange_g1)
                    + column_sum::<G1Projective>(&cols.c[k], &phase1.lagrange_g1),
            );
        }
        // tau^i * (tau^n - 1) for i < n - 1.
        let h_query: Vec<G1Projective> = (0..n - 1)
            .map(|i| phase1.tau_powers_g1[i + n].into_group() - phase1.tau_powers_g1[i])
            .collect();

        let combined = G1Projective::normalize_batch(&combined);
        let key = ProvingKey {
            vk: VerificationKey {
                alpha_g1: phase1.alpha_tau_g1[0],
                beta_g2: phase1.beta_g2,
                gamma_g2: G2Affine::generator(),
                delta_g2: G2Affine::generator(),
                gamma_abc_g1: combined[..public].to_vec(),
            },
            cs: cs.clone(),
            beta_g1: phase1.beta_tau_g1[0],
            delta_g1: G1Affine::generator(),
            a_query: G1Projective::normalize_batch(&a_query),
            b_g1_query: G1Projective::normalize_batch(&b_g1),
            b_g2_query: G2Projective::normalize_batch(&b_g2),
            h_query: G1Projective::normalize_batch(&h_query),
            l_query: combined[public..].to_vec(),
        };
        Ok(Self {
            phase1_digest: phase1.digest(),
            cs_digest: cs.digest(),
            program_digest,
            key,
            records: Vec::new(),
        })
    }

    fn head_digest(&self) -> Digest32 {
        match self.records.last() {
            Some(r) => r.running_digest,
            None => genesis_digest(&self.phase1_digest, &self.cs_digest),
        }
    }

    /// Structural sanity of the current state against its own records.
    fn check_consistent(&self) -> Result<(), CeremonyError> {
        let bad = |m: &str| Err(CeremonyError::InvalidPriorState(m.into()));
        if self.records.last().is_some_and(|r| r.is_beacon) {
            return bad("ceremony already finalized");
        }
        if let Some(last) = self.records.last() {
            if last.update.delta_g1 != self.key.delta_g1
                || last.update.delta_g2 != self.key.vk.delta_g2
                || last.update.gamma_g2 != self.key.vk.gamma_g2
            {
                return bad("key does not match the last record");
            }
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.index as usize != i {
                return bad("record indices are not sequential");
            }
        }
        Ok(())
    }

    /// Digest of the full proving key, binding a record to the state it produced.
    pub fn key_digest(&self) -> Digest32 {
        Sha256::digest(self.key.to_bytes()).into()
    }
}

fn genesis_digest(phase1_digest: &Digest32, cs_digest: &Digest32) -> Digest32 {
    sha256_parts(&[b"expresso/phase2/genesis", phase1_digest, cs_digest])
}

/// Maps a transcript prefix to a G2 point nobody knows the discrete log of.
fn hash_to_g2(parts: &[&[u8]]) -> G2Affine {
    let mut rng = rng_from("expresso/phase2/hash-to-g2", parts);
    G2Projective::rand(&mut rng).into_affine()
}

/// Proof of knowledge of `x` in `(s, s*x)`: the pair `(h, h*x)` for a
/// challenge point `h` derived from the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnowledgeProof {
    pub s: G1Affine,
    pub s_x: G1Affine,
    pub h_x: G2Affine,
}

impl KnowledgeProof {
    fn create<R: RngCore>(x: Fr, tag: &[u8], prev: &Digest32, rng: &mut R) -> Self {
        let s = (G1Projective::generator() * nonzero_scalar(rng)).into_affine();
        let s_x = (s * x).into_affine();
        let h = challenge_point(tag, prev, &s, &s_x);
        Self {
            s,
            s_x,
            h_x: (h * x).into_affine(),
        }
    }

    fn challenge(&self, tag: &[u8], prev: &Digest32) -> G2Affine {
        challenge_point(tag, prev, &self.s, &self.s_x)
    }

    fn write(&self, w: &mut Writer) {
        w.g1(&self.s);
        w.g1(&self.s_x);
        w.g2(&self.h_x);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            s: r.g1()?,
            s_x: r.g1()?,
            h_x: r.g2()?,
        })
    }
}

fn challenge_point(tag: &[u8], prev: &Digest32, s: &G1Affine, s_x: &G1Affine) -> G2Affine {
    let mut w = Writer::default();
    w.g1(s);
    w.g1(s_x);
    hash_to_g2(&[tag, prev, &w.into_bytes()])
}

/// Public part of one contribution: the new `delta` and `gamma` encodings
/// and proofs that they are known multiples of the previous ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicUpdate {
    pub delta_g1: G1Affine,
    pub delta_g2: G2Affine,
    pub gamma_g2: G2Affine,
    pub delta_proof: KnowledgeProof,
    pub gamma_proof: KnowledgeProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContributionRecord {
    pub index: u32,
    pub contributor_id: String,
    /// The beacon record is produced from public randomness and must come last.
    pub is_beacon: bool,
    pub update: PublicUpdate,
    /// Digest of the proving key after this contribution.
    pub key_digest: Digest32,
    /// Hash chaining this record to all prior ones.
    pub running_digest: Digest32,
}

impl ContributionRecord {
    fn body_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.index);
        w.str(&self.contributor_id);
        w.u8(u8::from(self.is_beacon));
        w.g1(&self.update.delta_g1);
        w.g2(&self.update.delta_g2);
        w.g2(&self.update.gamma_g2);
        self.update.delta_proof.write(&mut w);
        self.update.gamma_proof.write(&mut w);
        w.raw(&self.key_digest);
        w.into_bytes()
    }

    fn chain(prev: &Digest32, body: &[u8]) -> Digest32 {
        sha256_parts(&[b"expresso/phase2/record", prev, body])
    }
}

impl Encode for ContributionRecord {
    fn encode(&self, w: &mut Writer) {
        w.raw(&self.body_bytes());
        w.raw(&self.running_digest);
    }
}

impl Decode for ContributionRecord {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let index = r.u32()?;
        let contributor_id = r.string()?;
        let is_beacon = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(DecodeError::Invalid("bad beacon flag".into())),
        };
        let update = PublicUpdate {
            delta_g1: r.g1()?,
            delta_g2: r.g2()?,
            gamma_g2: r.g2()?,
            delta_proof: KnowledgeProof::read(r)?,
            gamma_proof: KnowledgeProof::read(r)?,
        };
        Ok(Self {
            index,
            contributor_id,
            is_beacon,
            update,
            key_digest: r.array()?,
            running_digest: r.array()?,
        })
    }
}

const DELTA_TAG: &[u8] = b"delta";
const GAMMA_TAG: &[u8] = b"gamma";

fn apply_shares(state: &CeremonyState, delta: Fr, gamma: Fr) -> ProvingKey {
    let mut key = state.key.clone();
    let delta_inv = delta.inverse().expect("nonzero share");
    let gamma_inv = gamma.inverse().expect("nonzero share");
    let scale = |pts: &[G1Affine], k: Fr| {
        let scaled: Vec<G1Projective> = pts.iter().map(|p| p.into_group() * k).collect();
        G1Projective::normalize_batch(&scaled)
    };
    key.delta_g1 = (key.delta_g1 * delta).into_affine();
    key.vk.delta_g2 = (key.vk.delta_g2 * delta).into_affine();
    key.vk.gamma_g2 = (key.vk.gamma_g2 * gamma).into_affine();
    key.l_query = scale(&key.l_query, delta_inv);
    key.h_query = scale(&key.h_query, delta_inv);
    key.vk.gamma_abc_g1 = scale(&key.vk.gamma_abc_g1, gamma_inv);
    key
}

fn push_record(
    state: &CeremonyState,
    contributor_id: &str,
    is_beacon: bool,
    delta: Fr,
    gamma: Fr,
    rng: &mut ChaCha20Rng,
) -> CeremonyState {
    let prev = state.head_digest();
    let update_proofs = (
        KnowledgeProof::create(delta, DELTA_TAG, &prev, rng),
        KnowledgeProof::create(gamma, GAMMA_TAG, &prev, rng),
    );
    let key = apply_shares(state, delta, gamma);
    let mut next = CeremonyState {
        key,
        records: state.records.clone(),
        ..state.clone()
    };
    let mut record = ContributionRecord {
        index: state.records.len() as u32,
        contributor_id: contributor_id.to_string(),
        is_beacon,
        update: PublicUpdate {
            delta_g1: next.key.delta_g1,
            delta_g2: next.key.vk.delta_g2,
            gamma_g2: next.key.vk.gamma_g2,
            delta_proof: update_proofs.0,
            gamma_proof: update_proofs.1,
        },
        key_digest: next.key_digest(),
        running_digest: [0; 32],
    };
    record.running_digest = ContributionRecord::chain(&prev, &record.body_bytes());
    next.records.push(record);
    next
}

/// Adds one party's randomness. The shares are derived from `entropy`,
/// used, and dropped; only their public images enter the record.
pub fn contribute(
    prev_state: &CeremonyState,
    contributor_id: &str,
    entropy: &[u8],
) -> Result<(CeremonyState, ContributionRecord), CeremonyError> {
    prev_state.check_consistent()?;
    let (delta, gamma, mut rng) = contribution_shares(prev_state, entropy);
    let next = push_record(prev_state, contributor_id, false, delta, gamma, &mut rng);
    let record = next.records.last().expect("just pushed").clone();
    Ok((next, record))
}

fn contribution_shares(state: &CeremonyState, entropy: &[u8]) -> (Fr, Fr, ChaCha20Rng) {
    let prev = state.head_digest();
    let mut rng = rng_from("expresso/phase2/contribution", &[entropy, &prev]);
    let delta = nonzero_scalar(&mut rng);
    let gamma = nonzero_scalar(&mut rng);
    (delta, gamma, rng)
}

/// The `(delta, gamma)` shares `contribute` would derive from `entropy`.
#[cfg(feature = "insecure-trapdoor")]
pub fn reveal_contribution_shares(state: &CeremonyState, entropy: &[u8]) -> (Fr, Fr) {
    let (d, g, _) = contribution_shares(state, entropy);
    (d, g)
}

/// The shares the beacon contributes on top of `state`.
#[cfg(feature = "insecure-trapdoor")]
pub fn reveal_beacon_shares(state: &CeremonyState, beacon: &[u8]) -> (Fr, Fr) {
    let (d, g, _) = beacon_shares(beacon, &state.head_digest());
    (d, g)
}

/// Shares derived from the beacon; anyone can recompute them.
fn beacon_shares(beacon: &[u8], prev: &Digest32) -> (Fr, Fr, ChaCha20Rng) {
    let mut rng = rng_from("expresso/phase2/beacon", &[beacon, prev]);
    let delta = nonzero_scalar(&mut rng);
    let gamma = nonzero_scalar(&mut rng);
    (delta, gamma, rng)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CeremonyTranscript {
    pub phase1_digest: Digest32,
    pub cs_digest: Digest32,
    /// Contributions followed by the beacon record.
    pub records: Vec<ContributionRecord>,
    pub beacon: Vec<u8>,
    pub beacon_source: String,
    pub final_digest: Digest32,
}

const TRANSCRIPT_MAGIC: &[u8; 8] = b"XPRTRN01";

impl Encode for CeremonyTranscript {
    fn encode(&self, w: &mut Writer) {
        w.raw(TRANSCRIPT_MAGIC);
        w.raw(&self.phase1_digest);
        w.raw(&self.cs_digest);
        w.vec(&self.records, |w, r| r.encode(w));
        w.bytes(&self.beacon);
        w.str(&self.beacon_source);
        w.raw(&self.final_digest);
    }
}

impl Decode for CeremonyTranscript {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.array::<8>()? != *TRANSCRIPT_MAGIC {
            return Err(DecodeError::Invalid("not a ceremony transcript".into()));
        }
        Ok(Self {
            phase1_digest: r.array()?,
            cs_digest: r.array()?,
            records: r.vec(ContributionRecord::decode)?,
            beacon: r.bytes()?.to_vec(),
            beacon_source: r.string()?,
            final_digest: r.array()?,
        })
    }
}

impl CeremonyTranscript {
    pub fn digest(&self) -> Digest32 {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Human-readable summary written next to the binary transcript.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("phase1_digest {}\n", hex::encode(self.phase1_digest)));
        out.push_str(&format!("cs_digest {}\n", hex::encode(self.cs_digest)));
        for r in &self.records {
            let kind = if r.is_beacon { "beacon" } else { "contribution" };
            out.push_str(&format!(
                "{kind} {} {} {}\n",
                r.index,
                r.contributor_id,
                hex::encode(r.running_digest)
            ));
        }
        out.push_str(&format!("beacon_source {}\n", self.beacon_source));
        out.push_str(&format!("beacon {}\n", hex::encode(&self.beacon)));
        out.push_str(&format!("final_digest {}\n", hex::encode(self.final_digest)));
        out.push_str(&format!("transcript_digest {}\n", hex::encode(self.digest())));
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("transcript header: {0}")]
    Header(String),
    #[error("record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("transcript has no contributions")]
    NoContributions,
    #[error("beacon record missing or not last")]
    MissingBeacon,
    #[error("final digest does not match the record chain")]
    FinalDigest,
}

impl TranscriptError {
    /// Index of the first rejected record, if the failure is tied to one.
    pub fn record(&self) -> Option<usize> {
        match self {
            TranscriptError::BadRecord { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// Checks the record chain against `phase1`. Pure; names the first bad
/// record on failure.
pub fn verify_transcript(
    transcript: &CeremonyTranscript,
    phase1: &Phase1Parameters,
) -> Result<(), TranscriptError> {
    let phase1_digest = phase1.digest();
    let mut prev = genesis_digest(&phase1_digest, &transcript.cs_digest);
    let mut delta_g1 = G1Affine::generator();
    let mut delta_g2 = G2Affine::generator();
    let mut gamma_g2 = G2Affine::generator();
    let g1 = G1Affine::generator();
    let g2 = G2Affine::generator();
    let records = &transcript.records;

    for (i, r) in records.iter().enumerate() {
        let bad = |reason: &str| TranscriptError::BadRecord {
            index: i,
            reason: reason.into(),
        };
        if r.index as usize != i {
            return Err(bad("index out of sequence"));
        }
        if ContributionRecord::chain(&prev, &r.body_bytes()) != r.running_digest {
            return Err(bad("running digest does not chain from the previous record"));
        }
        let u = &r.update;
        if !pairing_eq(u.delta_g1, g2, g1, u.delta_g2) {
            return Err(bad("delta differs between G1 and G2"));
        }
        for (proof, tag) in [(&u.delta_proof, DELTA_TAG), (&u.gamma_proof, GAMMA_TAG)] {
            let h = proof.challenge(tag, &prev);
            if proof.s.is_zero() || !pairing_eq(proof.s, proof.h_x, proof.s_x, h) {
                return Err(bad("proof of knowledge does not verify"));
            }
        }
        // new = old * x, with x the exponent proven in the knowledge proof.
        if !pairing_eq(u.delta_proof.s, u.delta_g2, u.delta_proof.s_x, delta_g2) {
            return Err(bad("delta update is not the proven multiple of its predecessor"));
        }
        if !pairing_eq(u.gamma_proof.s, u.gamma_g2, u.gamma_proof.s_x, gamma_g2) {
            return Err(bad("gamma update is not the proven multiple of its predecessor"));
        }
        if r.is_beacon {
            if i + 1 != records.len() {
                return Err(bad("beacon record is not last"));
            }
            let (d, g, _) = beacon_shares(&transcript.beacon, &prev);
            if u.delta_g1 != (delta_g1 * d).into_affine() || u.gamma_g2 != (gamma_g2 * g).into_affine() {
                return Err(bad("beacon update does not match the published beacon"));
            }
        }
        delta_g1 = u.delta_g1;
        delta_g2 = u.delta_g2;
        gamma_g2 = u.gamma_g2;
        prev = r.running_digest;
    }

    // Structural checks come after the per-record walk so that a tampered
    // record is reported at its own index.
    if transcript.phase1_digest != phase1_digest {
        return Err(TranscriptError::Header("phase-1 digest does not match the parameters".into()));
    }
    match records.last() {
        Some(r) if r.is_beacon => {}
        _ => return Err(TranscriptError::MissingBeacon),
    }
    if records.len() < 2 {
        return Err(TranscriptError::NoContributions);
    }
    if prev != transcript.final_digest {
        return Err(TranscriptError::FinalDigest);
    }
    Ok(())
}

/// Applies the beacon and assembles the final keys and transcript.
pub fn finalize(
    state: &CeremonyState,
    beacon: &[u8],
    beacon_source: &str,
    cs: &ConstraintSystem,
) -> Result<(ProvingKey, CeremonyTranscript), CeremonyError> {
    if beacon.is_empty() {
        return Err(CeremonyError::EmptyBeacon);
    }
    if state.records.is_empty() {
        return Err(CeremonyError::EmptyCeremony);
    }
    if cs.digest() != state.cs_digest {
        return Err(CeremonyError::CircuitMismatch);
    }
    state.check_consistent()?;
    let prev = state.head_digest();
    let (delta, gamma, mut rng) = beacon_shares(beacon, &prev);
    let done = push_record(state, "beacon", true, delta, gamma, &mut rng);
    let transcript = CeremonyTranscript {
        phase1_digest: done.phase1_digest,
        cs_digest: done.cs_digest,
        final_digest: done.head_digest(),
        records: done.records,
        beacon: beacon.to_vec(),
        beacon_source: beacon_source.to_string(),
    };
    Ok((done.key, transcript))
}

/// Checks that `key` is the initial key of `initial` rescaled by the
/// transcript's final `gamma` and `delta`: every fixed query is unchanged
/// and every dependent query is the same multiple of its initial value.
pub fn verify_key_against_transcript<R: RngCore>(
    key: &ProvingKey,
    initial: &CeremonyState,
    transcript: &CeremonyTranscript,
    rng: &mut R,
) -> Result<(), String> {
    let init = &initial.key;
    let last = transcript.records.last().ok_or("empty transcript")?;
    if key.cs != init.cs || transcript.cs_digest != initial.cs_digest {
        return Err("constraint system differs".into());
    }
    if key.vk.alpha_g1 != init.vk.alpha_g1
        || key.vk.beta_g2 != init.vk.beta_g2
        || key.beta_g1 != init.beta_g1
        || key.a_query != init.a_query
        || key.b_g1_query != init.b_g1_query
        || key.b_g2_query != init.b_g2_query
    {
        return Err("delta-independent queries were modified".into());
    }
    if key.delta_g1 != last.update.delta_g1
        || key.vk.delta_g2 != last.update.delta_g2
        || key.vk.gamma_g2 != last.update.gamma_g2
    {
        return Err("final gamma/delta differ from the transcript".into());
    }
    if key.l_query.len() != init.l_query.len()
        || key.h_query.len() != init.h_query.len()
        || key.vk.gamma_abc_g1.len() != init.vk.gamma_abc_g1.len()
    {
        return Err("query lengths differ".into());
    }
    let g2 = G2Affine::generator();
    // sum r_i * new_i scaled back by the final exponent equals sum r_i * old_i.
    let mut check = |new: &[G1Affine], old: &[G1Affine], by: G2Affine, name: &str| {
        let r: Vec<Fr> = (0..new.len()).map(|_| Fr::rand(rng)).collect();
        let lhs = G1Projective::msm_unchecked(new, &r).into_affine();
        let rhs = G1Projective::msm_unchecked(old, &r).into_affine();
        if pairing_eq(lhs, by, rhs, g2) {
            Ok(())
        } else {
            Err(format!("{name} is not the initial query divided by the final exponent"))
        }
    };
    check(&key.l_query, &init.l_query, key.vk.delta_g2, "L query")?;
    check(&key.h_query, &init.h_query, key.vk.delta_g2, "H query")?;
    check(&key.vk.gamma_abc_g1, &init.vk.gamma_abc_g1, key.vk.gamma_g2, "input query")?;
    Ok(())
}

#[cfg(all(test, feature = "insecure-trapdoor"))]
mod tests {
    use super::*;
    use crate::groth16::{self, insecure};
    use crate::r1cs::{CircuitBuilder, WitnessVector};

    fn cubic(x: u64) -> (ConstraintSystem, WitnessVector) {
        let mut b = CircuitBuilder::new();
        let xv = Fr::from(x);
        let out = b.alloc_public(xv * xv * xv + xv + Fr::from(5u64)).unwrap();
        let x = b.alloc(xv);
        let x2 = b.mul(&x, &x);
        let x3 = b.mul(&x2, &x);
        b.enforce_equal(&x3.add(&x).add_constant(Fr::from(5u64)), &out);
        b.finish()
    }

    fn run(phase1: &Phase1Parameters, cs: &ConstraintSystem, entropies: &[&[u8]]) -> (CeremonyState, ProvingKey, CeremonyTranscript) {
        let initial = CeremonyState::initialize(phase1, cs, [7; 32]).unwrap();
        let mut state = initial.clone();
        for (i, e) in entropies.iter().enumerate() {
            state = contribute(&state, &format!("party-{i}"), e).unwrap().0;
        }
        let (key, transcript) = finalize(&state, b"beacon", "test", cs).unwrap();
        (initial, key, transcript)
    }

    #[test]
    fn phase1_is_consistent_and_matches_trapdoor() {
        let (p1, t) = phase1_generate_with_trapdoor(8, b"seed").unwrap();
        assert_eq!(p1.tau_powers_g1[0], G1Affine::generator());
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        p1.verify(&mut rng).unwrap();
        for i in [0usize, 1, 5, 14] {
            let expected = (G1Projective::generator() * t.tau.pow([i as u64])).into_affine();
            assert_eq!(p1.tau_powers_g1[i], expected);
        }
        let mut tampered = p1.clone();
        tampered.lagrange_g1[3] = tampered.lagrange_g1[4];
        assert!(tampered.verify(&mut rng).is_err());
        let mut tampered = p1.clone();
        tampered.tau_powers_g1[9] = tampered.tau_powers_g1[10];
        assert!(tampered.verify(&mut rng).is_err());
        assert_eq!(Phase1Parameters::from_bytes(&p1.to_bytes()).unwrap(), p1);
        assert!(matches!(phase1_generate(12, b"x"), Err(CeremonyError::DegreeNotPowerOfTwo(12))));
    }

    #[test]
    fn phase1_degree_must_cover_the_circuit() {
        let (cs, _) = cubic(1);
        let p1 = phase1_generate(4, b"seed").unwrap();
        assert!(matches!(
            CeremonyState::initialize(&p1, &cs, [0; 32]),
            Err(CeremonyError::DegreeTooSmall { degree: 4, required: 8 })
        ));
    }

    #[test]
    fn ceremony_key_equals_trapdoor_setup() {
        let (cs, w) = cubic(3);
        let (p1, t) = phase1_generate_with_trapdoor(8, b"seed").unwrap();
        let initial = CeremonyState::initialize(&p1, &cs, [0; 32]).unwrap();
        let mut state = initial.clone();
        let (mut delta, mut gamma) = (Fr::one(), Fr::one());
        for e in [b"a".as_slice(), b"b", b"c"] {
            let (d, g) = reveal_contribution_shares(&state, e);
            delta *= d;
            gamma *= g;
            state = contribute(&state, "p", e).unwrap().0;
        }
        let (d, g) = reveal_beacon_shares(&state, b"beacon");
        delta *= d;
        gamma *= g;
        let (key, transcript) = finalize(&state, b"beacon", "test", &cs).unwrap();
        let oracle = insecure::setup(
            &cs,
            &insecure::Trapdoor {
                tau: t.tau,
                alpha: t.alpha,
                beta: t.beta,
                gamma,
                delta,
            },
        )
        .unwrap();
        assert_eq!(key, oracle);

        verify_transcript(&transcript, &p1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        verify_key_against_transcript(&key, &initial, &transcript, &mut rng).unwrap();
        let proof = groth16::prove(&key, &w, &mut rng).unwrap();
        assert!(groth16::verify(&key.vk, w.public_inputs(1), &proof));
    }

    #[test]
    fn transcript_tampering_is_located() {
        let (cs, _) = cubic(3);
        let p1 = phase1_generate(8, b"seed").unwrap();
        let (_, _, honest) = run(&p1, &cs, &[b"a", b"b", b"c"]);
        assert_eq!(honest.records.len(), 4);
        verify_transcript(&honest, &p1).unwrap();
        assert_eq!(CeremonyTranscript::from_bytes(&honest.to_bytes()).unwrap(), honest);

        let (_, _, other) = run(&p1, &cs, &[b"x", b"y", b"z"]);
        let mut spliced = honest.clone();
        spliced.records[2].update = other.records[2].update;
        assert_eq!(verify_transcript(&spliced, &p1).unwrap_err().record(), Some(2));

        let mut reordered = honest.clone();
        reordered.records.swap(1, 2);
        assert_eq!(verify_transcript(&reordered, &p1).unwrap_err().record(), Some(1));

        let mut no_beacon = honest.clone();
        no_beacon.records.pop();
        no_beacon.final_digest = no_beacon.records.last().unwrap().running_digest;
        assert_eq!(verify_transcript(&no_beacon, &p1), Err(TranscriptError::MissingBeacon));

        let mut replayed = honest.clone();
        let dup = replayed.records[1].clone();
        replayed.records.insert(2, dup);
        assert_eq!(verify_transcript(&replayed, &p1).unwrap_err().record(), Some(2));

        let mut wrong_beacon = honest.clone();
        wrong_beacon.beacon = b"other".to_vec();
        assert_eq!(verify_transcript(&wrong_beacon, &p1).unwrap_err().record(), Some(3));

        let tampered_p1 = phase1_generate(8, b"other seed").unwrap();
        assert_eq!(verify_transcript(&honest, &tampered_p1).unwrap_err().record(), Some(0));
    }

    #[test]
    fn finalization_requires_contribution_and_beacon() {
        let (cs, _) = cubic(3);
        let p1 = phase1_generate(8, b"seed").unwrap();
        let state = CeremonyState::initialize(&p1, &cs, [0; 32]).unwrap();
        assert_eq!(finalize(&state, b"b", "s", &cs).unwrap_err(), CeremonyError::EmptyCeremony);
        let state = contribute(&state, "p", b"e").unwrap().0;
        assert_eq!(finalize(&state, b"", "s", &cs).unwrap_err(), CeremonyError::EmptyBeacon);
        let (other_cs, _) = {
            let mut b = CircuitBuilder::new();
            let x = b.alloc(Fr::one());
            b.mul(&x, &x);
            b.finish()
        };
        assert_eq!(finalize(&state, b"b", "s", &other_cs).unwrap_err(), CeremonyError::CircuitMismatch);
    }

    #[test]
    fn every_contribution_changes_the_key() {
        let (cs, _) = cubic(3);
        let p1 = phase1_generate(8, b"seed").unwrap();
        let (_, base, _) = run(&p1, &cs, &[b"a", b"b", b"c"]);
        for i in 0..3 {
            let mut e: Vec<&[u8]> = vec![b"a", b"b", b"c"];
            e[i] = b"changed";
            let (_, key, _) = run(&p1, &cs, &e);
            assert_ne!(key.to_bytes(), base.to_bytes(), "contribution {i}");
        }
    }
}
