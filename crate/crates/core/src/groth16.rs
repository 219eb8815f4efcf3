//! Groth16 over BN254.
//!
//! The QAP appends one row per public variable (including the constant one)
//! constraining `A = w_j`, so every public input column is linearly
//! independent. The evaluation domain therefore needs at least
//! `constraints + num_public + 1` points.

use ark_bn254::{Bn254, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{AffineRepr, CurveGroup, VariableBaseMSM};
use ark_ff::{FftField, Field, One, UniformRand, Zero};
use ark_poly::{EvaluationDomain, Radix2EvaluationDomain};
use rand::RngCore;
use thiserror::Error;

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::r1cs::{ConstraintSystem, Digest32, WitnessVector};

pub type Domain = Radix2EvaluationDomain<Fr>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Groth16Error {
    #[error("witness violates constraint {0}")]
    UnsatisfiedConstraints(usize),
    #[error("witness has {actual} entries, key expects {expected}")]
    KeyMismatch { expected: usize, actual: usize },
    #[error("constraint system too large for an FFT domain")]
    DomainTooLarge,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("{actual} public inputs supplied, key expects {expected}")]
    InputLength { expected: usize, actual: usize },
    #[error("malformed proof: {0}")]
    MalformedProof(String),
    #[error("pairing check failed")]
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proof {
    pub a: G1Affine,
    pub b: G2Affine,
    pub c: G1Affine,
}

/// Compressed size: two G1 points and one G2 point.
pub const PROOF_BYTES: usize = 33 + 65 + 33;

impl Encode for Proof {
    fn encode(&self, w: &mut Writer) {
        w.g1(&self.a);
        w.g2(&self.b);
        w.g1(&self.c);
    }
}

impl Decode for Proof {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            a: r.g1()?,
            b: r.g2()?,
            c: r.g1()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationKey {
    pub alpha_g1: G1Affine,
    pub beta_g2: G2Affine,
    pub gamma_g2: G2Affine,
    pub delta_g2: G2Affine,
    /// `[(beta*u_j + alpha*v_j + w_j) / gamma]_1` for the one variable and each public input.
    pub gamma_abc_g1: Vec<G1Affine>,
}

impl VerificationKey {
    pub fn num_public(&self) -> usize {
        self.gamma_abc_g1.len() - 1
    }

    pub fn prepare(&self) -> PreparedVerificationKey {
        PreparedVerificationKey {
            alpha_beta: Bn254::pairing(self.alpha_g1, self.beta_g2),
            neg_gamma: (-self.gamma_g2).into(),
            neg_delta: (-self.delta_g2).into(),
            gamma_abc_g1: self.gamma_abc_g1.clone(),
        }
    }
}

impl Encode for VerificationKey {
    fn encode(&self, w: &mut Writer) {
        w.g1(&self.alpha_g1);
        w.g2(&self.beta_g2);
        w.g2(&self.gamma_g2);
        w.g2(&self.delta_g2);
        w.vec(&self.gamma_abc_g1, |w, p| w.g1(p));
    }
}

impl Decode for VerificationKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let vk = Self {
            alpha_g1: r.g1()?,
            beta_g2: r.g2()?,
            gamma_g2: r.g2()?,
            delta_g2: r.g2()?,
            gamma_abc_g1: r.vec(|r| r.g1())?,
        };
        if vk.gamma_abc_g1.is_empty() {
            return Err(DecodeError::Invalid("verification key without input bases".into()));
        }
        Ok(vk)
    }
}

pub struct PreparedVerificationKey {
    alpha_beta: PairingOutput<Bn254>,
    neg_gamma: <Bn254 as Pairing>::G2Prepared,
    neg_delta: <Bn254 as Pairing>::G2Prepared,
    gamma_abc_g1: Vec<G1Affine>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvingKey {
    pub vk: VerificationKey,
    /// The constraint system the key was generated for; the prover needs
    /// its matrices to compute the quotient polynomial.
    pub cs: ConstraintSystem,
    pub beta_g1: G1Affine,
    pub delta_g1: G1Affine,
    /// `[u_k(tau)]_1` for every variable.
    pub a_query: Vec<G1Affine>,
    pub b_g1_query: Vec<G1Affine>,
    pub b_g2_query: Vec<G2Affine>,
    /// `[tau^i * Z(tau) / delta]_1` for `i < n - 1`.
    pub h_query: Vec<G1Affine>,
    /// `[(beta*u_k + alpha*v_k + w_k) / delta]_1` for private variables.
    pub l_query: Vec<G1Affine>,
}

impl ProvingKey {
    pub fn cs_digest(&self) -> Digest32 {
        self.cs.digest()
    }

    /// The evaluation domain the key was generated over. It may be larger
    /// than the minimum the constraint system needs.
    pub fn domain(&self) -> Domain {
        Domain::new(self.h_query.len() + 1).expect("power-of-two size checked at construction")
    }
}

impl Encode for ProvingKey {
    fn encode(&self, w: &mut Writer) {
        self.vk.encode(w);
        self.cs.encode(w);
        w.g1(&self.beta_g1);
        w.g1(&self.delta_g1);
        w.vec(&self.a_query, |w, p| w.g1(p));
        w.vec(&self.b_g1_query, |w, p| w.g1(p));
        w.vec(&self.b_g2_query, |w, p| w.g2(p));
        w.vec(&self.h_query, |w, p| w.g1(p));
        w.vec(&self.l_query, |w, p| w.g1(p));
    }
}

impl Decode for ProvingKey {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let pk = Self {
            vk: VerificationKey::decode(r)?,
            cs: ConstraintSystem::decode(r)?,
            beta_g1: r.g1()?,
            delta_g1: r.g1()?,
            a_query: r.vec(|r| r.g1())?,
            b_g1_query: r.vec(|r| r.g1())?,
            b_g2_query: r.vec(|r| r.g2())?,
            h_query: r.vec(|r| r.g1())?,
            l_query: r.vec(|r| r.g1())?,
        };
        let n = pk.cs.num_variables;
        let public = pk.cs.num_public + 1;
        let required = domain_for(&pk.cs).map_err(|e| DecodeError::Invalid(e.to_string()))?;
        let size = pk.h_query.len() + 1;
        if !size.is_power_of_two() || size < required.size() {
            return Err(DecodeError::Invalid("proving key domain too small".into()));
        }
        if pk.a_query.len() != n
            || pk.b_g1_query.len() != n
            || pk.b_g2_query.len() != n
            || pk.l_query.len() != n - public
            || pk.vk.gamma_abc_g1.len() != public
        {
            return Err(DecodeError::Invalid("proving key shape does not match its constraint system".into()));
        }
        Ok(pk)
    }
}

pub fn domain_for(cs: &ConstraintSystem) -> Result<Domain, Groth16Error> {
    Domain::new(cs.num_constraints() + cs.num_public + 1).ok_or(Groth16Error::DomainTooLarge)
}

/// Smallest power-of-two domain size that fits `cs`.
pub fn domain_size(cs: &ConstraintSystem) -> Result<usize, Groth16Error> {
    Ok(domain_for(cs)?.size())
}

/// QAP columns: for each variable, its `(row, coefficient)` entries in A, B and C.
pub struct QapColumns {
    pub a: Vec<Vec<(usize, Fr)>>,
    pub b: Vec<Vec<(usize, Fr)>>,
    pub c: Vec<Vec<(usize, Fr)>>,
}

pub fn qap_columns(cs: &ConstraintSystem) -> QapColumns {
    let n = cs.num_variables;
    let mut cols = QapColumns {
        a: vec![Vec::new(); n],
        b: vec![Vec::new(); n],
        c: vec![Vec::new(); n],
    };
    for (row, con) in cs.constraints.iter().enumerate() {
        for (i, coeff) in &con.a.0 {
            cols.a[*i].push((row, *coeff));
        }
        for (i, coeff) in &con.b.0 {
            cols.b[*i].push((row, *coeff));
        }
        for (i, coeff) in &con.c.0 {
            cols.c[*i].push((row, *coeff));
        }
    }
    let m = cs.num_constraints();
    for j in 0..=cs.num_public {
        cols.a[j].push((m + j, Fr::one()));
    }
    cols
}

/// Row evaluations of `A*w`, `B*w`, `C*w` over the domain, zero-padded.
fn row_evaluations(cs: &ConstraintSystem, w: &[Fr], n: usize) -> (Vec<Fr>, Vec<Fr>, Vec<Fr>) {
    let mut a = vec![Fr::zero(); n];
    let mut b = vec![Fr::zero(); n];
    let mut c = vec![Fr::zero(); n];
    for (row, con) in cs.constraints.iter().enumerate() {
        a[row] = con.a.evaluate(w);
        b[row] = con.b.evaluate(w);
        c[row] = con.c.evaluate(w);
    }
    let m = cs.num_constraints();
    a[m..=m + cs.num_public].copy_from_slice(&w[..=cs.num_public]);
    (a, b, c)
}

/// Coefficients of `h = (a*b - c) / Z`, computed on a coset where `Z` is a
/// nonzero constant.
fn quotient_coefficients(cs: &ConstraintSystem, w: &[Fr], domain: &Domain) -> Vec<Fr> {
    let n = domain.size();
    let (mut a, mut b, mut c) = row_evaluations(cs, w, n);
    domain.ifft_in_place(&mut a);
    domain.ifft_in_place(&mut b);
    domain.ifft_in_place(&mut c);
    let coset = domain
        .get_coset(Fr::GENERATOR)
        .expect("the multiplicative generator is outside the subgroup");
    coset.fft_in_place(&mut a);
    coset.fft_in_place(&mut b);
    coset.fft_in_place(&mut c);
    let z_inv = (Fr::GENERATOR.pow([n as u64]) - Fr::one())
        .inverse()
        .expect("coset avoids the roots of unity");
    let mut h: Vec<Fr> = a
        .iter()
        .zip(&b)
        .zip(&c)
        .map(|((a, b), c)| (*a * b - c) * z_inv)
        .collect();
    coset.ifft_in_place(&mut h);
    h.truncate(n - 1);
    h
}

/// Produces a proof, refusing witnesses that do not satisfy the key's system.
pub fn prove<R: RngCore>(
    pk: &ProvingKey,
    witness: &WitnessVector,
    rng: &mut R,
) -> Result<Proof, Groth16Error> {
    check_length(pk, witness)?;
    if let Some(i) = pk
        .cs
        .first_unsatisfied(witness)
        .expect("length checked above")
    {
        return Err(Groth16Error::UnsatisfiedConstraints(i));
    }
    Ok(create_proof(pk, witness, rng))
}

/// Proves without the satisfiability check, so soundness tests can confirm
/// that the verifier rejects proofs of false statements.
#[cfg(feature = "insecure-trapdoor")]
pub fn prove_unchecked<R: RngCore>(
    pk: &ProvingKey,
    witness: &WitnessVector,
    rng: &mut R,
) -> Result<Proof, Groth16Error> {
    check_length(pk, witness)?;
    Ok(create_proof(pk, witness, rng))
}

fn check_length(pk: &ProvingKey, witness: &WitnessVector) -> Result<(), Groth16Error> {
    if witness.len() != pk.cs.num_variables {
        return Err(Groth16Error::KeyMismatch {
            expected: pk.cs.num_variables,
            actual: witness.len(),
        });
    }
    Ok(())
}

fn create_proof<R: RngCore>(pk: &ProvingKey, witness: &WitnessVector, rng: &mut R) -> Proof {
    let w = &witness.0;
    let domain = pk.domain();
    let h = quotient_coefficients(&pk.cs, w, &domain);
    let r = Fr::rand(rng);
    let s = Fr::rand(rng);
    let delta_g1 = pk.delta_g1.into_group();

    let a = pk.vk.alpha_g1.into_group() + G1Projective::msm_unchecked(&pk.a_query, w) + delta_g1 * r;
    let b_g1 = pk.beta_g1.into_group() + G1Projective::msm_unchecked(&pk.b_g1_query, w) + delta_g1 * s;
    let b_g2 = pk.vk.beta_g2.into_group()
        + G2Projective::msm_unchecked(&pk.b_g2_query, w)
        + pk.vk.delta_g2.into_group() * s;
    let private = &w[pk.cs.num_public + 1..];
    let c = G1Projective::msm_unchecked(&pk.l_query, private)
        + G1Projective::msm_unchecked(&pk.h_query, &h)
        + a * s
        + b_g1 * r
        - delta_g1 * (r * s);

    let [a, c] = <G1Projective as CurveGroup>::normalize_batch(&[a, c])
        .try_into()
        .expect("two points");
    Proof {
        a,
        b: b_g2.into_affine(),
        c,
    }
}

pub fn verify(vk: &VerificationKey, public_inputs: &[Fr], proof: &Proof) -> bool {
    verify_prepared(&vk.prepare(), public_inputs, proof).is_ok()
}

pub fn verify_prepared(
    pvk: &PreparedVerificationKey,
    public_inputs: &[Fr],
    proof: &Proof,
) -> Result<(), VerifyError> {
    if public_inputs.len() + 1 != pvk.gamma_abc_g1.len() {
        return Err(VerifyError::InputLength {
            expected: pvk.gamma_abc_g1.len() - 1,
            actual: public_inputs.len(),
        });
    }
    check_point_g1(&proof.a, "A")?;
    check_point_g1(&proof.c, "C")?;
    if !proof.b.is_on_curve() || !proof.b.is_in_correct_subgroup_assuming_on_curve() {
        return Err(VerifyError::MalformedProof("B is not a valid G2 point".into()));
    }
    let ic = pvk.gamma_abc_g1[0].into_group()
        + G1Projective::msm_unchecked(&pvk.gamma_abc_g1[1..], public_inputs);
    let ml = Bn254::multi_miller_loop(
        [proof.a, ic.into_affine(), proof.c],
        [proof.b.into(), pvk.neg_gamma.clone(), pvk.neg_delta.clone()],
    );
    match Bn254::final_exponentiation(ml) {
        Some(out) if out == pvk.alpha_beta => Ok(()),
        _ => Err(VerifyError::Rejected),
    }
}

/// Decodes and verifies in one step; a malformed encoding is a rejection,
/// never a panic.
pub fn verify_encoded(
    pvk: &PreparedVerificationKey,
    public_inputs: &[Fr],
    proof_bytes: &[u8],
) -> Result<(), VerifyError> {
    let proof = Proof::from_bytes(proof_bytes).map_err(|e| VerifyError::MalformedProof(e.to_string()))?;
    verify_prepared(pvk, public_inputs, &proof)
}

fn check_point_g1(p: &G1Affine, name: &str) -> Result<(), VerifyError> {
    if p.is_on_curve() {
        Ok(())
    } else {
        Err(VerifyError::MalformedProof(format!("{name} is not on G1")))
    }
}

/// Key generation from explicitly known trapdoors. Anyone holding the
/// trapdoor can forge proofs; this exists only as an oracle for tests.
#[cfg(feature = "insecure-trapdoor")]
pub mod insecure {
    use super::*;
    use ark_ec::scalar_mul::ScalarMul;
    use ark_ff::Field;

    #[derive(Debug, Clone, Copy)]
    pub struct Trapdoor {
        pub tau: Fr,
        pub alpha: Fr,
        pub beta: Fr,
        pub gamma: Fr,
        pub delta: Fr,
    }

    impl Trapdoor {
        pub fn random<R: RngCore>(rng: &mut R) -> Self {
            Self {
                tau: Fr::rand(rng),
                alpha: Fr::rand(rng),
                beta: Fr::rand(rng),
                gamma: Fr::rand(rng),
                delta: Fr::rand(rng),
            }
        }
    }

    pub fn setup(cs: &ConstraintSystem, t: &Trapdoor) -> Result<ProvingKey, Groth16Error> {
        let domain = domain_for(cs)?;
        let lagrange = domain.evaluate_all_lagrange_coefficients(t.tau);
        let cols = qap_columns(cs);
        let eval = |col: &Vec<(usize, Fr)>| -> Fr { col.iter().map(|(row, c)| lagrange[*row] * c).sum() };
        let u: Vec<Fr> = cols.a.iter().map(eval).collect();
        let v: Vec<Fr> = cols.b.iter().map(eval).collect();
        let w: Vec<Fr> = cols.c.iter().map(eval).collect();
        let gamma_inv = t.gamma.inverse().expect("nonzero gamma");
        let delta_inv = t.delta.inverse().expect("nonzero delta");
        let combined = |k: usize| t.beta * u[k] + t.alpha * v[k] + w[k];
        let public = cs.num_public + 1;
        let ic: Vec<Fr> = (0..public).map(|k| combined(k) * gamma_inv).collect();
        let l: Vec<Fr> = (public..cs.num_variables).map(|k| combined(k) * delta_inv).collect();
        let z = domain.evaluate_vanishing_polynomial(t.tau);
        let mut h = Vec::with_capacity(domain.size() - 1);
        let mut power = z * delta_inv;
        for _ in 0..domain.size() - 1 {
            h.push(power);
            power *= t.tau;
        }

        let g1 = G1Projective::from(G1Affine::generator());
        let g2 = G2Projective::from(G2Affine::generator());
        let one_g1 = |x: Fr| (g1 * x).into_affine();
        let one_g2 = |x: Fr| (g2 * x).into_affine();
        Ok(ProvingKey {
            vk: VerificationKey {
                alpha_g1: one_g1(t.alpha),
                beta_g2: one_g2(t.beta),
                gamma_g2: one_g2(t.gamma),
                delta_g2: one_g2(t.delta),
                gamma_abc_g1: g1.batch_mul(&ic),
            },
            cs: cs.clone(),
            beta_g1: one_g1(t.beta),
            delta_g1: one_g1(t.delta),
            a_query: g1.batch_mul(&u),
            b_g1_query: g1.batch_mul(&v),
            b_g2_query: g2.batch_mul(&v),
            h_query: g1.batch_mul(&h),
            l_query: g1.batch_mul(&l),
        })
    }
}

#[cfg(all(test, feature = "insecure-trapdoor"))]
mod tests {
    use super::*;
    use crate::r1cs::CircuitBuilder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// x^3 + x + 5 = out with out public.
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

    #[test]
    fn prove_verify_and_input_binding() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (cs, w) = cubic(3);
        let pk = insecure::setup(&cs, &insecure::Trapdoor::random(&mut rng)).unwrap();
        let proof = prove(&pk, &w, &mut rng).unwrap();
        let inputs = w.public_inputs(1).to_vec();
        assert!(verify(&pk.vk, &inputs, &proof));
        assert!(!verify(&pk.vk, &[inputs[0] + Fr::one()], &proof));
        assert!(matches!(
            verify_prepared(&pk.vk.prepare(), &[], &proof),
            Err(VerifyError::InputLength { .. })
        ));

        let again = prove(&pk, &w, &mut rng).unwrap();
        assert!(verify(&pk.vk, &inputs, &again));
        assert_ne!(again.to_bytes(), proof.to_bytes());
        assert_eq!(proof.to_bytes().len(), PROOF_BYTES);
        assert_eq!(Proof::from_bytes(&proof.to_bytes()).unwrap(), proof);
    }

    #[test]
    fn unsatisfied_and_mismatched_witnesses() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (cs, w) = cubic(3);
        let pk = insecure::setup(&cs, &insecure::Trapdoor::random(&mut rng)).unwrap();
        let mut bad = w.clone();
        bad.0[3] += Fr::one();
        assert_eq!(prove(&pk, &bad, &mut rng), Err(Groth16Error::UnsatisfiedConstraints(0)));
        let forged = prove_unchecked(&pk, &bad, &mut rng).unwrap();
        assert!(!verify(&pk.vk, w.public_inputs(1), &forged));
        let short = WitnessVector(w.0[..3].to_vec());
        assert!(matches!(prove(&pk, &short, &mut rng), Err(Groth16Error::KeyMismatch { .. })));
    }

    #[test]
    fn keys_from_other_trapdoors_reject() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (cs, w) = cubic(4);
        let pk1 = insecure::setup(&cs, &insecure::Trapdoor::random(&mut rng)).unwrap();
        let pk2 = insecure::setup(&cs, &insecure::Trapdoor::random(&mut rng)).unwrap();
        let proof = prove(&pk1, &w, &mut rng).unwrap();
        assert!(verify(&pk1.vk, w.public_inputs(1), &proof));
        assert!(!verify(&pk2.vk, w.public_inputs(1), &proof));
    }

    #[test]
    fn keys_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (cs, _) = cubic(2);
        let pk = insecure::setup(&cs, &insecure::Trapdoor::random(&mut rng)).unwrap();
        assert_eq!(ProvingKey::from_bytes(&pk.to_bytes()).unwrap(), pk);
        assert_eq!(VerificationKey::from_bytes(&pk.vk.to_bytes()).unwrap(), pk.vk);
    }

    #[test]
    fn malformed_encoding_is_rejected_without_panic() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (cs, w) = cubic(2);
        let pk = insecure::setup(&cs, &insecure::Trapdoor::random(&mut rng)).unwrap();
        let mut bytes = prove(&pk, &w, &mut rng).unwrap().to_bytes();
        bytes[32] = 7;
        assert!(matches!(
            verify_encoded(&pk.vk.prepare(), w.public_inputs(1), &bytes),
            Err(VerifyError::MalformedProof(_))
        ));
    }
}
