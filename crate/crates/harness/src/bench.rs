//! Latency and size measurements, reported next to a fixed reference row.

use std::time::Instant;

use anyhow::Context;
use expresso_core::encoding::Encode;
use expresso_core::membership::{derive_ppid, MembershipProof};
use expresso_core::token::{sign_token, IdTokenClaims};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deploy::Deployment;

/// Published figures for the reference implementation (milliseconds and
/// constraint count). Shown for comparison only.
pub const REFERENCE: ReferenceRow = ReferenceRow {
    proving_ms: 4338.0,
    verification_ms: 237.30,
    oidc_ops_ms: 1.8,
    user_auth_ms: 239.2,
    constraints: 94_180,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub proving_ms: f64,
    pub verification_ms: f64,
    pub oidc_ops_ms: f64,
    pub user_auth_ms: f64,
    pub constraints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub constraints: usize,
    /// One-time proof generation.
    pub proving_ms: f64,
    /// IdP-side membership check: input binding plus pairing check.
    pub verification_ms: f64,
    /// Token construction and signing plus pseudonym derivation.
    pub oidc_ops_ms: f64,
    /// Whole login through the user agent with a cached proof.
    pub user_auth_ms: f64,
    pub proof_bytes: usize,
    pub fragment_bytes: usize,
    pub pk_bytes: usize,
    pub vk_bytes: usize,
    pub reference: ReferenceRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no measurements to report")]
    Empty,
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

impl BenchReport {
    /// A cached-proof login does at least the verification and the token
    /// work, so it cannot be faster than both together.
    pub fn is_consistent(&self) -> bool {
        self.user_auth_ms >= self.verification_ms + self.oidc_ops_ms
    }

    pub fn emit(&self, format: Format) -> Result<String, ReportError> {
        if self.repetitions == 0 {
            return Err(ReportError::Empty);
        }
        Ok(match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes"),
            Format::Text => self.to_text(),
        })
    }

    fn to_text(&self) -> String {
        let r = &self.reference;
        let mut out = String::new();
        out.push_str(&format!("repetitions        {}\n", self.repetitions));
        out.push_str(&format!("{:<18} {:>12} {:>12}\n", "", "measured", "reference"));
        let rows = [
            ("proving_ms", self.proving_ms, r.proving_ms),
            ("verification_ms", self.verification_ms, r.verification_ms),
            ("oidc_ops_ms", self.oidc_ops_ms, r.oidc_ops_ms),
            ("user_auth_ms", self.user_auth_ms, r.user_auth_ms),
        ];
        for (name, ours, theirs) in rows {
            out.push_str(&format!("{name:<18} {ours:>12.3} {theirs:>12.2}\n"));
        }
        out.push_str(&format!("{:<18} {:>12} {:>12}\n", "constraints", self.constraints, r.constraints));
        out.push_str(&format!("proof_bytes        {}\n", self.proof_bytes));
        out.push_str(&format!("fragment_bytes     {}\n", self.fragment_bytes));
        out.push_str(&format!("pk_bytes           {}\n", self.pk_bytes));
        out.push_str(&format!("vk_bytes           {}\n", self.vk_bytes));
        out.push_str("reference column: published figures on different hardware, not a pass/fail bound\n");
        out
    }
}

/// One IdP-side membership check, in milliseconds.
pub fn time_verification(dep: &Deployment, proof: &MembershipProof) -> anyhow::Result<f64> {
    let t = Instant::now();
    dep.idp.verify_membership(proof)?;
    Ok(t.elapsed().as_secs_f64() * 1e3)
}

/// Pseudonym derivation plus building and signing one token, in
/// milliseconds.
pub fn time_oidc_ops(proof: &MembershipProof) -> f64 {
    let key = ed25519_dalek::SigningKey::from_bytes(&[7u8; 32]);
    let t = Instant::now();
    let ppid = derive_ppid(&[3u8; 16], proof, &[1u8; 32]);
    let token = sign_token(
        &IdTokenClaims {
            iss: "expresso:bench".into(),
            sub: hex::encode(ppid),
            iat: 0,
            exp: 600,
            nonce: "0123456789abcdef".into(),
            claims: [("email".to_string(), "bench@example.org".to_string())].into(),
        },
        &key,
    );
    std::hint::black_box(token);
    t.elapsed().as_secs_f64() * 1e3
}

/// Registers a fresh RP, proves once, then times `reps` of each operation.
pub async fn run(dep: &Deployment, rp_name: &str, user: &str, reps: usize) -> anyhow::Result<BenchReport> {
    anyhow::ensure!(reps > 0, "need at least one repetition");
    let handle = dep.add_rp(rp_name).await?;
    let t = Instant::now();
    let proof = handle.rp.generate_proof().await?;
    let proving_ms = t.elapsed().as_secs_f64() * 1e3;
    let state = handle.rp.state().context("RP has no state")?;

    let mut verification = Vec::with_capacity(reps);
    let mut oidc = Vec::with_capacity(reps);
    for _ in 0..reps {
        verification.push(time_verification(dep, &proof)?);
        oidc.push(time_oidc_ops(&proof));
    }

    let mut user_auth = Vec::with_capacity(reps);
    let mut fragment_bytes = 0;
    for _ in 0..reps {
        let t = Instant::now();
        let request = handle.rp.initiate_login(&["email"]).await?;
        fragment_bytes = request.to_fragment().len();
        let password = dep.password(user)?;
        dep.agent
            .login(
                &dep.idp_url,
                &request,
                crate::agent::Credentials {
                    username: user,
                    password,
                },
                None,
            )
            .await?;
        user_auth.push(t.elapsed().as_secs_f64() * 1e3);
    }

    Ok(BenchReport {
        repetitions: reps,
        constraints: state.artifacts.proving_key.cs.num_constraints(),
        proving_ms,
        verification_ms: mean(&verification),
        oidc_ops_ms: mean(&oidc),
        user_auth_ms: mean(&user_auth),
        proof_bytes: proof.to_bytes().len(),
        fragment_bytes,
        pk_bytes: state.artifacts.proving_key.to_bytes().len(),
        vk_bytes: state.artifacts.verification_key.to_bytes().len(),
        reference: REFERENCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BenchReport {
        BenchReport {
            repetitions: 50,
            constraints: 6466,
            proving_ms: 900.0,
            verification_ms: 5.5,
            oidc_ops_ms: 0.1,
            user_auth_ms: 30.0,
            proof_bytes: 219,
            fragment_bytes: 400,
            pk_bytes: 2_000_000,
            vk_bytes: 600,
            reference: REFERENCE,
        }
    }

    #[test]
    fn json_round_trips() {
        let r = sample();
        let json = r.emit(Format::Json).unwrap();
        assert_eq!(serde_json::from_str::<BenchReport>(&json).unwrap(), r);
    }

    #[test]
    fn text_carries_reference_row() {
        let text = sample().emit(Format::Text).unwrap();
        assert!(text.contains("237.30"));
        assert!(text.contains("239.20"));
        assert!(text.contains("94180"));
        assert!(text.contains("reference"));
    }

    #[test]
    fn empty_report_is_refused() {
        let r = BenchReport {
            repetitions: 0,
            ..sample()
        };
        assert_eq!(r.emit(Format::Text), Err(ReportError::Empty));
        assert!(sample().is_consistent());
    }
}
