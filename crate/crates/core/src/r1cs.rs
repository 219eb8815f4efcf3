//! Rank-1 constraint systems and the builder that synthesizes them.
//!
//! Variable layout of every witness vector: index 0 is the constant one,
//! indices `1..=num_public` are public inputs, everything after is private.
//! Synthesis always runs with concrete values (compilation uses placeholder
//! inputs), so the constraint structure never depends on the witness.

use std::collections::BTreeMap;

use ark_bn254::Fr;
use ark_ff::{One, Zero};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};

pub type Digest32 = [u8; 32];

/// Sparse linear combination over flat variable indices, sorted and merged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearCombination(pub Vec<(usize, Fr)>);

impl LinearCombination {
    pub fn evaluate(&self, w: &[Fr]) -> Fr {
        self.0.iter().map(|(i, c)| w[*i] * c).sum()
    }

    fn encode(&self, w: &mut Writer) {
        w.len_prefix(self.0.len());
        for (i, c) in &self.0 {
            w.u32(*i as u32);
            w.fr(c);
        }
    }

    fn decode(r: &mut Reader<'_>, num_variables: usize) -> Result<Self, DecodeError> {
        let terms = r.vec(|r| {
            let i = r.u32()? as usize;
            if i >= num_variables {
                return Err(DecodeError::Invalid(format!("variable index {i} out of range")));
            }
            Ok((i, r.fr()?))
        })?;
        Ok(Self(terms))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub a: LinearCombination,
    pub b: LinearCombination,
    pub c: LinearCombination,
}

impl Constraint {
    pub fn is_satisfied(&self, w: &[Fr]) -> bool {
        self.a.evaluate(w) * self.b.evaluate(w) == self.c.evaluate(w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSystem {
    /// Public inputs, excluding the constant-one variable.
    pub num_public: usize,
    /// All variables, including the constant-one variable.
    pub num_variables: usize,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvaluateError {
    #[error("witness has {actual} entries, constraint system expects {expected}")]
    LengthMismatch { expected: usize, actual: usize },
}

/// `[1, public inputs.., private assignments..]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessVector(pub Vec<Fr>);

impl WitnessVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn public_inputs(&self, num_public: usize) -> &[Fr] {
        &self.0[1..=num_public]
    }
}

impl ConstraintSystem {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_private(&self) -> usize {
        self.num_variables - self.num_public - 1
    }

    /// True iff every constraint holds.
    pub fn evaluate(&self, w: &WitnessVector) -> Result<bool, EvaluateError> {
        Ok(self.first_unsatisfied(w)?.is_none())
    }

    pub fn first_unsatisfied(&self, w: &WitnessVector) -> Result<Option<usize>, EvaluateError> {
        if w.len() != self.num_variables {
            return Err(EvaluateError::LengthMismatch {
                expected: self.num_variables,
                actual: w.len(),
            });
        }
        if w.0[0] != Fr::one() {
            return Ok(Some(0));
        }
        Ok(self.constraints.iter().position(|c| !c.is_satisfied(&w.0)))
    }

    /// SHA-256 over the canonical encoding.
    pub fn digest(&self) -> Digest32 {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Nonzero entries across the A, B and C matrices.
    pub fn nonzero_entries(&self) -> usize {
        self.constraints
            .iter()
            .map(|c| c.a.0.len() + c.b.0.len() + c.c.0.len())
            .sum()
    }
}

const CS_MAGIC: &[u8; 8] = b"XPR1CS01";

impl Encode for ConstraintSystem {
    fn encode(&self, w: &mut Writer) {
        w.raw(CS_MAGIC);
        w.u32(self.num_public as u32);
        w.u32(self.num_variables as u32);
        w.u32(self.constraints.len() as u32);
        for c in &self.constraints {
            c.a.encode(w);
            c.b.encode(w);
            c.c.encode(w);
        }
    }
}

impl Decode for ConstraintSystem {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.raw(8)? != CS_MAGIC {
            return Err(DecodeError::Invalid("not a constraint system export".into()));
        }
        let num_public = r.u32()? as usize;
        let num_variables = r.u32()? as usize;
        if num_public + 1 > num_variables {
            return Err(DecodeError::Invalid("public input count exceeds variables".into()));
        }
        let count = r.u32()? as usize;
        let mut constraints = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            constraints.push(Constraint {
                a: LinearCombination::decode(r, num_variables)?,
                b: LinearCombination::decode(r, num_variables)?,
                c: LinearCombination::decode(r, num_variables)?,
            });
        }
        Ok(Self {
            num_public,
            num_variables,
            constraints,
        })
    }
}

/// A variable during synthesis, before public and private indices are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    One,
    Public(usize),
    Private(usize),
}

/// Linear expression over builder variables together with its value.
#[derive(Debug, Clone)]
pub struct Num {
    pub terms: Vec<(Var, Fr)>,
    pub value: Fr,
}

impl Num {
    pub fn constant(value: Fr) -> Self {
        let terms = if value.is_zero() {
            Vec::new()
        } else {
            vec![(Var::One, value)]
        };
        Self { terms, value }
    }

    pub fn zero() -> Self {
        Self::constant(Fr::zero())
    }

    pub fn one() -> Self {
        Self::constant(Fr::one())
    }

    fn var(var: Var, value: Fr) -> Self {
        Self {
            terms: vec![(var, Fr::one())],
            value,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self {
            terms: merge_terms(terms),
            value: self.value + other.value,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-Fr::one()))
    }

    pub fn scale(&self, k: Fr) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(v, c)| (*v, *c * k)).collect(),
            value: self.value * k,
        }
    }

    pub fn add_constant(&self, k: Fr) -> Self {
        self.add(&Self::constant(k))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(v, _)| *v == Var::One)
    }
}

fn merge_terms(mut terms: Vec<(Var, Fr)>) -> Vec<(Var, Fr)> {
    if terms.len() < 2 {
        terms.retain(|(_, c)| !c.is_zero());
        return terms;
    }
    let mut merged: BTreeMap<Var, Fr> = BTreeMap::new();
    for (v, c) in terms.drain(..) {
        *merged.entry(v).or_insert_with(Fr::zero) += c;
    }
    merged.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthesisError {
    #[error("public inputs must be allocated before any private variable")]
    PublicAfterPrivate,
}

/// Accumulates constraints and assignments for one synthesis run.
#[derive(Debug, Default)]
pub struct CircuitBuilder {
    public: Vec<Fr>,
    private: Vec<Fr>,
    constraints: Vec<(Vec<(Var, Fr)>, Vec<(Var, Fr)>, Vec<(Var, Fr)>)>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc_public(&mut self, value: Fr) -> Result<Num, SynthesisError> {
        if !self.private.is_empty() {
            return Err(SynthesisError::PublicAfterPrivate);
        }
        self.public.push(value);
        Ok(Num::var(Var::Public(self.public.len() - 1), value))
    }

    pub fn alloc(&mut self, value: Fr) -> Num {
        self.private.push(value);
        Num::var(Var::Private(self.private.len() - 1), value)
    }

    pub fn enforce(&mut self, a: &Num, b: &Num, c: &Num) {
        self.constraints
            .push((a.terms.clone(), b.terms.clone(), c.terms.clone()));
    }

    /// Allocates `a * b` and constrains it.
    pub fn mul(&mut self, a: &Num, b: &Num) -> Num {
        let out = self.alloc(a.value * b.value);
        self.enforce(a, b, &out);
        out
    }

    pub fn enforce_equal(&mut self, a: &Num, b: &Num) {
        self.enforce(&a.sub(b), &Num::one(), &Num::zero());
    }

    /// Replaces a long linear expression by a fresh variable.
    pub fn materialize(&mut self, a: &Num) -> Num {
        let out = self.alloc(a.value);
        self.enforce(a, &Num::one(), &out);
        out
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Flattens variable indices and returns the system with its witness.
    pub fn finish(self) -> (ConstraintSystem, WitnessVector) {
        let num_public = self.public.len();
        let flat = |v: &Var| match v {
            Var::One => 0,
            Var::Public(i) => 1 + i,
            Var::Private(i) => 1 + num_public + i,
        };
        let lc = |terms: &[(Var, Fr)]| {
            let mut out: Vec<(usize, Fr)> = merge_terms(terms.to_vec())
                .iter()
                .map(|(v, c)| (flat(v), *c))
                .collect();
            out.sort_by_key(|(i, _)| *i);
            LinearCombination(out)
        };
        let constraints = self
            .constraints
            .iter()
            .map(|(a, b, c)| Constraint {
                a: lc(a),
                b: lc(b),
                c: lc(c),
            })
            .collect();
        let mut witness = Vec::with_capacity(1 + num_public + self.private.len());
        witness.push(Fr::one());
        witness.extend(self.public);
        witness.extend(self.private);
        let cs = ConstraintSystem {
            num_public,
            num_variables: witness.len(),
            constraints,
        };
        (cs, WitnessVector(witness))
    }
}
