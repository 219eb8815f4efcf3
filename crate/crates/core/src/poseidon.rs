//! Poseidon permutation with an `x^5` S-box.
//!
//! Round constants and the Cauchy MDS matrix are drawn from the Grain LFSR in
//! self-shrinking mode, seeded with the instance description (prime field,
//! x^alpha S-box, field size, width, full and partial round counts). The
//! first Grain-sampled MDS candidate with pairwise-distinct points is used.
//!
//! `hash` over `k <= 5` inputs permutes `[0, x_1, .., x_k]` at width `k + 1`
//! and returns lane 0. Longer inputs go through a rate-5 sponge at width 6
//! whose capacity lane is initialised with the input length.

use std::sync::OnceLock;

use ark_ff::{BigInteger, Field, PrimeField};
use num_bigint::BigUint;

pub const FULL_ROUNDS: usize = 8;
pub const MAX_WIDTH: usize = 6;
pub const SPONGE_RATE: usize = MAX_WIDTH - 1;

/// Partial rounds for widths 2..=6 at a 128-bit security target.
pub fn partial_rounds(width: usize) -> usize {
    match width {
        2 => 56,
        3 => 57,
        4 => 56,
        5 | 6 => 60,
        _ => panic!("unsupported Poseidon width {width}"),
    }
}

#[derive(Debug, Clone)]
pub struct PoseidonParams<F> {
    pub width: usize,
    pub full_rounds: usize,
    pub partial_rounds: usize,
    /// `round_constants[r * width + i]` is added to lane `i` in round `r`.
    pub round_constants: Vec<F>,
    pub mds: Vec<Vec<F>>,
}

impl<F: PrimeField> PoseidonParams<F> {
    pub fn generate(width: usize) -> Self {
        let partial = partial_rounds(width);
        let n_bits = F::MODULUS_BIT_SIZE as usize;
        let modulus = BigUint::from_bytes_le(&F::MODULUS.to_bytes_le());
        let mut grain = Grain::new(n_bits, width, FULL_ROUNDS, partial);

        let round_constants = (0..(FULL_ROUNDS + partial) * width)
            .map(|_| loop {
                let v = grain.next_int(n_bits);
                if v < modulus {
                    break field_from_biguint::<F>(&v);
                }
            })
            .collect();

        let mds = loop {
            let mut points: Vec<F> = (0..2 * width)
                .map(|_| field_from_biguint::<F>(&(grain.next_int(n_bits) % &modulus)))
                .collect();
            while !all_distinct(&points) {
                points = (0..2 * width)
                    .map(|_| field_from_biguint::<F>(&(grain.next_int(n_bits) % &modulus)))
                    .collect();
            }
            let (xs, ys) = points.split_at(width);
            if xs.iter().any(|x| ys.iter().any(|y| (*x + y).is_zero())) {
                continue;
            }
            break xs
                .iter()
                .map(|x| ys.iter().map(|y| (*x + y).inverse().unwrap()).collect())
                .collect();
        };

        Self {
            width,
            full_rounds: FULL_ROUNDS,
            partial_rounds: partial,
            round_constants,
            mds,
        }
    }

    pub fn total_rounds(&self) -> usize {
        self.full_rounds + self.partial_rounds
    }

    pub fn is_full_round(&self, round: usize) -> bool {
        let half = self.full_rounds / 2;
        round < half || round >= half + self.partial_rounds
    }

    pub fn permute(&self, state: &mut [F]) {
        assert_eq!(state.len(), self.width, "state width mismatch");
        let t = self.width;
        let mut next = vec![F::zero(); t];
        for round in 0..self.total_rounds() {
            for (lane, c) in state.iter_mut().zip(&self.round_constants[round * t..]) {
                *lane += c;
            }
            if self.is_full_round(round) {
                state.iter_mut().for_each(|lane| *lane = sbox(*lane));
            } else {
                state[0] = sbox(state[0]);
            }
            for (i, out) in next.iter_mut().enumerate() {
                *out = self.mds[i].iter().zip(state.iter()).map(|(m, s)| *m * s).sum();
            }
            state.copy_from_slice(&next);
        }
    }
}

/// Hash over any field given a parameter lookup by width; see the module docs
/// for the padding rule.
pub fn sponge_hash<'a, F: PrimeField>(
    params_for_width: impl Fn(usize) -> &'a PoseidonParams<F>,
    inputs: &[F],
) -> F {
    assert!(!inputs.is_empty(), "hash input must be non-empty");
    if inputs.len() < MAX_WIDTH {
        let params = params_for_width(inputs.len() + 1);
        let mut state = Vec::with_capacity(inputs.len() + 1);
        state.push(F::zero());
        state.extend_from_slice(inputs);
        params.permute(&mut state);
        return state[0];
    }
    let params = params_for_width(MAX_WIDTH);
    let mut state = vec![F::zero(); MAX_WIDTH];
    state[0] = F::from(inputs.len() as u64);
    for chunk in inputs.chunks(SPONGE_RATE) {
        for (lane, x) in state[1..].iter_mut().zip(chunk) {
            *lane += x;
        }
        params.permute(&mut state);
    }
    state[0]
}

#[inline]
pub fn sbox<F: Field>(x: F) -> F {
    let x2 = x.square();
    x2.square() * x
}

fn all_distinct<F: PartialEq>(v: &[F]) -> bool {
    v.iter()
        .enumerate()
        .all(|(i, a)| v[i + 1..].iter().all(|b| a != b))
}

fn field_from_biguint<F: PrimeField>(v: &BigUint) -> F {
    F::from_le_bytes_mod_order(&v.to_bytes_le())
}

/// Grain LFSR in self-shrinking mode, as used for Poseidon parameter generation.
struct Grain {
    state: Vec<bool>,
}

impl Grain {
    fn new(field_bits: usize, width: usize, full: usize, partial: usize) -> Self {
        let mut state = Vec::with_capacity(80);
        let mut push = |value: usize, bits: usize| {
            for i in (0..bits).rev() {
                state.push((value >> i) & 1 == 1);
            }
        };
        push(1, 2); // prime field
        push(0, 4); // x^alpha S-box
        push(field_bits, 12);
        push(width, 12);
        push(full, 10);
        push(partial, 10);
        push((1 << 30) - 1, 30);
        let mut grain = Self { state };
        for _ in 0..160 {
            grain.step();
        }
        grain
    }

    fn step(&mut self) -> bool {
        let s = &self.state;
        let bit = s[62] ^ s[51] ^ s[38] ^ s[23] ^ s[13] ^ s[0];
        self.state.remove(0);
        self.state.push(bit);
        bit
    }

    fn next_bit(&mut self) -> bool {
        loop {
            let keep = self.step();
            let bit = self.step();
            if keep {
                return bit;
            }
        }
    }

    fn next_int(&mut self, bits: usize) -> BigUint {
        let mut v = BigUint::default();
        for _ in 0..bits {
            v <<= 1u32;
            if self.next_bit() {
                v += 1u32;
            }
        }
        v
    }
}

fn bn254_params(width: usize) -> &'static PoseidonParams<ark_bn254::Fr> {
    static CACHE: [OnceLock<PoseidonParams<ark_bn254::Fr>>; MAX_WIDTH - 1] =
        [const { OnceLock::new() }; MAX_WIDTH - 1];
    assert!((2..=MAX_WIDTH).contains(&width), "unsupported width {width}");
    CACHE[width - 2].get_or_init(|| PoseidonParams::generate(width))
}

/// Cached parameters over the BN254 scalar field.
pub fn params(width: usize) -> &'static PoseidonParams<ark_bn254::Fr> {
    bn254_params(width)
}

/// The algebraic hash used inside the membership circuit.
///
/// Panics on empty input.
pub fn circuit_hash(inputs: &[ark_bn254::Fr]) -> ark_bn254::Fr {
    sponge_hash(bn254_params, inputs)
}
