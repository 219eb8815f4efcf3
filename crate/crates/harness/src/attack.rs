//! Attack drills: a malicious IdP substituting artifacts, colluding RPs
//! comparing pseudonyms, and a revoked RP trying to keep logging in.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock};

use anyhow::{anyhow, Context};
use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use expresso_core::api::{ArtifactsResponse, AuthRequest, RegisterResponse};
use expresso_core::artifacts::ZkArtifacts;
use expresso_core::circuit::{membership_inputs, membership_public_inputs, synthesize};
use expresso_core::encoding::{Decode, Encode};
use expresso_core::groth16;
use expresso_core::membership::MembershipProof;
use expresso_oidf::ArtifactSource;
use expresso_rp::{RelyingParty, RpError};
use rand::RngCore;
use serde::Serialize;

use crate::agent::Credentials;
use crate::deploy::{listen, Deployment, SERVICE_HOST};

/// What the malicious IdP hands out instead of its published artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Substitution {
    /// Forward unchanged.
    None,
    /// Keys from a ceremony the IdP ran on its own, stamped with the current
    /// version.
    PrivateCeremony,
    /// The published keys with one proving-key element replaced and the
    /// digest recomputed.
    Tampered,
    /// Keys the registry allocated to a different IdP.
    OtherTenant,
    /// An earlier version of this IdP's keys.
    Stale,
}

struct ProxyState {
    upstream: String,
    http: reqwest::Client,
    mode: RwLock<Substitution>,
    replacements: HashMap<&'static str, Vec<u8>>,
}

fn key(s: Substitution) -> &'static str {
    match s {
        Substitution::None => "none",
        Substitution::PrivateCeremony => "private",
        Substitution::Tampered => "tampered",
        Substitution::OtherTenant => "other",
        Substitution::Stale => "stale",
    }
}

/// An HTTP man-in-the-middle standing in for a dishonest IdP. Every request
/// goes to the real IdP; artifact bytes in the responses are swapped.
pub struct MaliciousIdp {
    pub url: String,
    state: Arc<ProxyState>,
}

impl MaliciousIdp {
    pub fn set_mode(&self, mode: Substitution) {
        *self.state.mode.write().unwrap() = mode;
    }

    pub fn supports(&self, mode: Substitution) -> bool {
        mode == Substitution::None || self.state.replacements.contains_key(key(mode))
    }
}

/// Prepares every substitution that is possible in the deployment's
/// current state and starts the proxy.
pub async fn start_malicious_idp(dep: &Deployment, source: Arc<dyn ArtifactSource>) -> anyhow::Result<MaliciousIdp> {
    let active = dep.idp.ensure_artifacts().await?;
    let current = active.artifacts.clone();
    let mut replacements = HashMap::new();

    let (private, _) = tokio::task::spawn_blocking(move || source.produce()).await??;
    let private = ZkArtifacts::new(current.version, private.program_digest, private.proving_key, private.transcript_digest);
    replacements.insert(key(Substitution::PrivateCeremony), private.to_bytes());

    let mut pk = current.proving_key.clone();
    pk.h_query[0] = (pk.h_query[0] + pk.h_query[1]).into();
    let tampered = ZkArtifacts::new(current.version, current.program_digest, pk, current.transcript_digest);
    replacements.insert(key(Substitution::Tampered), tampered.to_bytes());

    if let Some(other) = dep.config.other_idps.first() {
        let registry = dep.registry.clone();
        let other = other.clone();
        let taken = tokio::task::spawn_blocking(move || match registry.latest_digest(&other) {
            Ok(rec) => registry.blob(&rec.artifact_digest).map(|b| b.as_ref().clone()).ok_or_else(|| anyhow!("blob gone")),
            Err(_) => Ok(registry.request_artifacts(&other)?.1.to_bytes()),
        })
        .await??;
        replacements.insert(key(Substitution::OtherTenant), taken);
    }

    if let Some(old) = dep.retired_artifacts().pop() {
        replacements.insert(key(Substitution::Stale), old);
    }

    let state = Arc::new(ProxyState {
        upstream: dep.idp_url.clone(),
        http: reqwest::Client::new(),
        mode: RwLock::new(Substitution::None),
        replacements,
    });
    let (listener, url) = listen(SERVICE_HOST).await?;
    let app = Router::new().fallback(relay).with_state(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(MaliciousIdp { url, state })
}

async fn relay(State(s): State<Arc<ProxyState>>, request: Request) -> Response {
    let method = request.method().clone();
    let path = request.uri().path_and_query().map(|p| p.as_str().to_string()).unwrap_or_default();
    let headers = request.headers().clone();
    let Ok(body) = axum::body::to_bytes(request.into_body(), 1 << 20).await else {
        return StatusCode::BAD_REQUEST.into_response();
    };
    match forward(&s, method, &path, headers, body).await {
        Ok(r) => r,
        Err(e) => (StatusCode::BAD_GATEWAY, e.to_string()).into_response(),
    }
}

async fn forward(s: &ProxyState, method: Method, path: &str, headers: HeaderMap, body: Bytes) -> anyhow::Result<Response> {
    let mut req = s.http.request(method, format!("{}{path}", s.upstream)).body(body);
    for name in [axum::http::header::AUTHORIZATION, axum::http::header::CONTENT_TYPE] {
        if let Some(v) = headers.get(&name) {
            req = req.header(name, v.clone());
        }
    }
    let resp = req.send().await?;
    let status = StatusCode::from_u16(resp.status().as_u16())?;
    let bytes = resp.bytes().await?;
    let mode = *s.mode.read().unwrap();
    let swap = s.replacements.get(key(mode)).filter(|_| status.is_success());
    let body = match (path.split('?').next(), swap) {
        (Some("/register"), Some(replacement)) => {
            let mut r: RegisterResponse = serde_json::from_slice(&bytes)?;
            r.artifacts = replacement.clone();
            serde_json::to_vec(&r)?
        }
        (Some("/artifacts/current"), Some(replacement)) => {
            let mut r: ArtifactsResponse = serde_json::from_slice(&bytes)?;
            let a = ZkArtifacts::from_bytes(replacement)?;
            r.version = a.version;
            r.artifact_digest = a.artifact_digest;
            r.artifacts = replacement.clone();
            serde_json::to_vec(&r)?
        }
        _ => bytes.to_vec(),
    };
    Ok((status, [(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response())
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrityReport {
    pub trials: usize,
    pub detected: usize,
    pub by_substitution: Vec<(Substitution, usize, usize)>,
    /// An unmodified relay must still register cleanly.
    pub control_passed: bool,
}

impl IntegrityReport {
    pub fn holds(&self) -> bool {
        self.control_passed && self.detected == self.trials
    }
}

/// Registers `trials` fresh RPs through the malicious IdP, cycling through
/// the available substitutions. Each must abort registration.
pub async fn integrity(dep: &Deployment, source: Arc<dyn ArtifactSource>, trials: usize) -> anyhow::Result<IntegrityReport> {
    let proxy = start_malicious_idp(dep, source).await?;
    let modes: Vec<Substitution> = [
        Substitution::PrivateCeremony,
        Substitution::Tampered,
        Substitution::OtherTenant,
        Substitution::Stale,
    ]
    .into_iter()
    .filter(|m| proxy.supports(*m))
    .collect();

    let (config, _) = dep.rp_config("control", &proxy.url);
    proxy.set_mode(Substitution::None);
    let control_passed = RelyingParty::new(config)?.register().await.is_ok();

    let mut tally: HashMap<&'static str, (Substitution, usize, usize)> = HashMap::new();
    let mut detected = 0;
    for i in 0..trials {
        let mode = modes[i % modes.len()];
        proxy.set_mode(mode);
        let (config, _) = dep.rp_config(&format!("victim-{i}"), &proxy.url);
        let outcome = RelyingParty::new(config)?.register().await;
        let caught = matches!(outcome, Err(RpError::IntegrityMismatch(_)));
        if caught {
            detected += 1;
        } else {
            tracing::warn!(?mode, "substitution not detected: {outcome:?}", outcome = outcome.err());
        }
        let entry = tally.entry(key(mode)).or_insert((mode, 0, 0));
        entry.1 += 1;
        entry.2 += usize::from(caught);
    }
    let mut by_substitution: Vec<_> = tally.into_values().collect();
    by_substitution.sort_by_key(|(m, _, _)| key(*m));
    Ok(IntegrityReport {
        trials,
        detected,
        by_substitution,
        control_passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CollusionReport {
    pub users: usize,
    pub repeats: usize,
    /// Users whose two pseudonyms differ.
    pub unlinkable: usize,
    /// (user, RP) pairs whose pseudonym was the same on every repeat.
    pub deterministic: usize,
    /// Distinct pseudonyms over all users and both RPs.
    pub distinct_subjects: usize,
}

impl CollusionReport {
    pub fn holds(&self) -> bool {
        self.unlinkable == self.users
            && self.deterministic == 2 * self.users
            && self.distinct_subjects == 2 * self.users
    }
}

/// Logs every user into both RPs `repeats` times and compares what the two
/// RPs could join on.
pub async fn collusion(
    dep: &Deployment,
    rp_a: &str,
    rp_b: &str,
    users: &[String],
    repeats: usize,
) -> anyhow::Result<CollusionReport> {
    let mut unlinkable = 0;
    let mut deterministic = 0;
    let mut all = HashSet::new();
    for user in users {
        let mut per_rp = Vec::new();
        for rp in [rp_a, rp_b] {
            let mut seen = HashSet::new();
            for _ in 0..repeats {
                let outcome = dep.login(user, rp, &["email"]).await?.with_context(|| format!("{user} at {rp}"))?;
                seen.insert(outcome.subject);
            }
            if seen.len() == 1 {
                deterministic += 1;
            }
            all.extend(seen.iter().cloned());
            per_rp.push(seen);
        }
        if per_rp[0].is_disjoint(&per_rp[1]) {
            unlinkable += 1;
        }
    }
    Ok(CollusionReport {
        users: users.len(),
        repeats,
        unlinkable,
        deterministic,
        distinct_subjects: all.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RevocationReport {
    pub trials: usize,
    pub rejected: usize,
    pub rejection_codes: Vec<String>,
    pub revoked_refresh_denied: bool,
    pub remaining: usize,
    pub remaining_ok: usize,
}

impl RevocationReport {
    pub fn holds(&self) -> bool {
        self.rejected == self.trials && self.revoked_refresh_denied && self.remaining_ok == self.remaining
    }
}

/// Deregisters `revoked`, then alternates between replaying its cached
/// proof and proving afresh from the keys it kept. Every attempt must fail;
/// every RP in `remaining` must refresh and log in.
pub async fn revocation(
    dep: &Deployment,
    revoked: &str,
    remaining: &[String],
    user: &str,
    trials: usize,
) -> anyhow::Result<RevocationReport> {
    let handle = dep.rp(revoked)?;
    let cached = handle.rp.generate_proof().await?;
    let kept = handle.rp.state().context("revoked RP has no state")?;
    dep.deregister(revoked).await?;

    let password = dep.password(user)?;
    let mut rejected = 0;
    let mut rejection_codes = Vec::new();
    for i in 0..trials {
        let proof = if i % 2 == 0 {
            cached.clone()
        } else {
            let kept = kept.clone();
            tokio::task::spawn_blocking(move || -> anyhow::Result<MembershipProof> {
                let (_, witness) = synthesize(&kept.program, &membership_inputs(&kept.credential))?;
                Ok(MembershipProof {
                    proof: groth16::prove(&kept.artifacts.proving_key, &witness, &mut rand::rngs::OsRng)?,
                    public_inputs: membership_public_inputs(&kept.credential.idp_credential_pk),
                    artifact_version: kept.artifacts.version,
                })
            })
            .await??
        };
        let mut state = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut state);
        let request = AuthRequest {
            proof,
            scope: vec!["email".into()],
            state: hex::encode(state),
            redirect_uri: handle.proxy_handle.clone(),
        };
        let creds = Credentials {
            username: user,
            password,
        };
        match dep.agent.login(&dep.idp_url, &request, creds, None).await {
            Ok(_) => tracing::warn!(trial = i, "revoked RP logged in"),
            Err(e) => {
                rejected += 1;
                rejection_codes.push(e.code().unwrap_or("transport").to_string());
            }
        }
    }
    let revoked_refresh_denied = matches!(handle.rp.refresh_artifacts().await, Err(RpError::AccessDenied));

    let mut remaining_ok = 0;
    for name in remaining {
        dep.rp(name)?.rp.refresh_artifacts().await?;
        if dep.login(user, name, &["email"]).await?.is_ok() {
            remaining_ok += 1;
        }
    }
    Ok(RevocationReport {
        trials,
        rejected,
        rejection_codes,
        revoked_refresh_denied,
        remaining: remaining.len(),
        remaining_ok,
    })
}
