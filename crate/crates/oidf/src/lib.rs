//! The trust-anchor registry.
//!
//! Holds a pool of ceremony outputs, hands one to an enrolled IdP per
//! request, and publishes an append-only log of `(idp, version, digest)`
//! records that relying parties check received artifacts against. Also
//! serves the boilerplate program every ceremony was run for.

pub mod pool;
pub mod service;
pub mod store;

pub use pool::{ArtifactSource, CeremonySource, Registry, RegistryConfig, RegistryError};
pub use service::{router, serve};
