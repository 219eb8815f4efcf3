//! The identity provider.
//!
//! Registers relying parties by signing a random client identifier with a
//! credential key, verifies membership proofs against the one active
//! verification key, authenticates users, and issues tokens whose subject is
//! a pseudonym derived from the proof. Artifacts come from the registry and
//! are rotated whenever a client leaves.

pub mod http;
pub mod provider;
pub mod users;

pub use http::{router, serve};
pub use provider::{AccessLogEntry, ActiveArtifacts, Endpoint, IdentityProvider, IdpConfig, IdpError, Registration};
