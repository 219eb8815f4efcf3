//! Core of the expresso single sign-on system: a Groth16 membership proof that
//! a relying party holds a client identifier signed by its identity provider,
//! the trusted-setup ceremony producing the proving and verification keys,
//! and the protocol data types exchanged between services.

pub mod api;
pub mod artifacts;
pub mod babyjubjub;
pub mod ceremony;
pub mod circuit;
pub mod credential;
pub mod eddsa;
pub mod edwards;
pub mod encoding;
pub mod gadgets;
pub mod groth16;
pub mod membership;
pub mod poseidon;
pub mod r1cs;
pub mod token;

pub use ark_bn254::Fr as FieldElement;
