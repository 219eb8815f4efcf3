//! Compact signed identity tokens: `header.payload.signature`, each part
//! base64url without padding, signed with Ed25519.
//!
//! There is deliberately no audience claim: naming the relying party would
//! tell the IdP who the user is logging in to.

use std::collections::BTreeMap;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const HEADER: &str = r#"{"alg":"EdDSA","typ":"JWT"}"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdTokenClaims {
    pub iss: String,
    /// Hex-encoded proof-based pairwise pseudonym.
    pub sub: String,
    pub iat: u64,
    pub exp: u64,
    /// The relying party's login state, echoed for binding.
    pub nonce: String,
    #[serde(default)]
    pub claims: BTreeMap<String, String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("token signature does not verify")]
    BadSignature,
    #[error("token expired")]
    Expired,
}

pub fn sign_token(claims: &IdTokenClaims, key: &SigningKey) -> String {
    let payload = serde_json::to_vec(claims).expect("claims serialize");
    let signing_input = format!("{}.{}", URL_SAFE_NO_PAD.encode(HEADER), URL_SAFE_NO_PAD.encode(payload));
    let sig = key.sign(signing_input.as_bytes());
    format!("{signing_input}.{}", URL_SAFE_NO_PAD.encode(sig.to_bytes()))
}

/// Checks the signature and expiry; state binding is the caller's job.
pub fn verify_token(token: &str, key: &VerifyingKey, now: u64) -> Result<IdTokenClaims, TokenError> {
    let malformed = |m: &str| TokenError::Malformed(m.to_string());
    let mut parts = token.split('.');
    let (Some(h), Some(p), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(malformed("expected three parts"));
    };
    let header = URL_SAFE_NO_PAD.decode(h).map_err(|_| malformed("header encoding"))?;
    if header != HEADER.as_bytes() {
        return Err(malformed("unsupported header"));
    }
    let sig_bytes: [u8; 64] = URL_SAFE_NO_PAD
        .decode(s)
        .map_err(|_| malformed("signature encoding"))?
        .try_into()
        .map_err(|_| malformed("signature length"))?;
    key.verify(format!("{h}.{p}").as_bytes(), &Signature::from_bytes(&sig_bytes))
        .map_err(|_| TokenError::BadSignature)?;
    let payload = URL_SAFE_NO_PAD.decode(p).map_err(|_| malformed("payload encoding"))?;
    let claims: IdTokenClaims = serde_json::from_slice(&payload).map_err(|e| malformed(&e.to_string()))?;
    if now >= claims.exp {
        return Err(TokenError::Expired);
    }
    Ok(claims)
}
