//! Relying-party side of the protocol.
//!
//! An RP registers once, checks the artifacts it received against the
//! digest the registry published for its IdP, proves membership once per
//! artifact version and hands the cached proof to every login. Tokens come
//! back through the user agent and are checked against the IdP's
//! token-signing key and the login state.

pub mod client;
pub mod http;
pub mod persist;

pub use client::{LoginOutcome, RelyingParty, RpConfig, RpError, RpState};
pub use http::{callback_router, serve_callback};
