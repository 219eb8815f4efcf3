//! The relying-party state machine and its calls to the IdP and registry.

use std::collections::{BTreeMap, HashSet};
use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use ed25519_dalek::VerifyingKey;
use expresso_core::api::{
    ArtifactsResponse, AuthRequest, BoilerplateResponse, DigestRecord, ErrorBody, RegisterRequest, RegisterResponse,
    TokenFragment, TokenKeyResponse,
};
use expresso_core::artifacts::ZkArtifacts;
use expresso_core::circuit::{membership_inputs, membership_public_inputs, synthesize, BoilerplateProgram};
use expresso_core::credential::ClientCredential;
use expresso_core::encoding::{Decode, Writer};
use expresso_core::groth16;
use expresso_core::membership::MembershipProof;
use expresso_core::token::{verify_token, TokenError};
use rand::RngCore;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::persist;

#[derive(Debug, Error)]
pub enum RpError {
    #[error("artifact integrity check failed: {0}")]
    IntegrityMismatch(String),
    #[error("credential signature does not verify")]
    InvalidCredential,
    #[error("registry unavailable: {0}")]
    RegistryUnavailable(String),
    #[error("identity provider error: {0}")]
    Idp(String),
    #[error("not registered with the identity provider")]
    AccessDenied,
    #[error("proving failed: {0}")]
    Proving(String),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("token does not answer a login this RP started")]
    StateMismatch,
    #[error("state persistence failed: {0}")]
    Persist(String),
}

#[derive(Debug, Clone)]
pub struct RpConfig {
    pub client_name: String,
    pub idp_url: String,
    pub idp_id: String,
    pub oidf_url: String,
    /// Redirect target registered with the IdP; a proxy handle, never the
    /// RP's own callback.
    pub proxy_redirect: String,
    /// Source address for outgoing requests.
    pub bind_address: Option<IpAddr>,
    /// Directory for restart recovery.
    pub state_dir: Option<PathBuf>,
}

impl RpConfig {
    pub fn new(client_name: &str, idp_url: &str, idp_id: &str, oidf_url: &str, proxy_redirect: &str) -> Self {
        Self {
            client_name: client_name.to_string(),
            idp_url: idp_url.trim_end_matches('/').to_string(),
            idp_id: idp_id.to_string(),
            oidf_url: oidf_url.trim_end_matches('/').to_string(),
            proxy_redirect: proxy_redirect.to_string(),
            bind_address: None,
            state_dir: None,
        }
    }
}

/// Everything the RP holds after registration. Immutable once built; a
/// refresh swaps in a new value.
pub struct RpState {
    pub registration_token: String,
    pub credential: ClientCredential,
    pub program: BoilerplateProgram,
    pub artifacts: Arc<ZkArtifacts>,
    pub token_key: VerifyingKey,
    pub cached_proof: Option<MembershipProof>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoginOutcome {
    pub subject: String,
    pub claims: BTreeMap<String, String>,
}

pub struct RelyingParty {
    config: RpConfig,
    http: reqwest::Client,
    state: RwLock<Option<Arc<RpState>>>,
    prove_lock: tokio::sync::Mutex<()>,
    pending_logins: Mutex<HashSet<String>>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

async fn error_message(resp: reqwest::Response) -> String {
    let status = resp.status();
    match resp.json::<ErrorBody>().await {
        Ok(e) => format!("{status} {}: {}", e.error, e.message),
        Err(_) => status.to_string(),
    }
}

impl RelyingParty {
    pub fn new(config: RpConfig) -> Result<Self, RpError> {
        let mut builder = reqwest::Client::builder().timeout(Duration::from_secs(120));
        if let Some(addr) = config.bind_address {
            builder = builder.local_address(addr);
        }
        let http = builder.build().map_err(|e| RpError::Idp(e.to_string()))?;
        Ok(Self {
            config,
            http,
            state: RwLock::new(None),
            prove_lock: tokio::sync::Mutex::new(()),
            pending_logins: Mutex::new(HashSet::new()),
        })
    }

    pub fn config(&self) -> &RpConfig {
        &self.config
    }

    pub fn state(&self) -> Option<Arc<RpState>> {
        self.state.read().unwrap().clone()
    }

    fn require_state(&self) -> Result<Arc<RpState>, RpError> {
        self.state().ok_or(RpError::AccessDenied)
    }

    fn set_state(&self, state: RpState) -> Result<Arc<RpState>, RpError> {
        let state = Arc::new(state);
        if let Some(dir) = &self.config.state_dir {
            persist::save(dir, &state).map_err(|e| RpError::Persist(e.to_string()))?;
        }
        *self.state.write().unwrap() = Some(state.clone());
        Ok(state)
    }

    async fn get_json<T: DeserializeOwned>(&self, url: String) -> Result<T, String> {
        let resp = self.http.get(url).send().await.map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(error_message(resp).await);
        }
        resp.json().await.map_err(|e| e.to_string())
    }

    async fn fetch_program(&self) -> Result<BoilerplateProgram, RpError> {
        let dto: BoilerplateResponse = self
            .get_json(format!("{}/boilerplate", self.config.oidf_url))
            .await
            .map_err(RpError::RegistryUnavailable)?;
        dto.into_program().map_err(RpError::IntegrityMismatch)
    }

    async fn fetch_token_key(&self) -> Result<VerifyingKey, RpError> {
        let key: TokenKeyResponse = self
            .get_json(format!("{}/token-signing-key", self.config.idp_url))
            .await
            .map_err(RpError::Idp)?;
        let bytes: [u8; 32] = key.key.try_into().map_err(|_| RpError::Idp("token key has wrong length".into()))?;
        VerifyingKey::from_bytes(&bytes).map_err(|e| RpError::Idp(e.to_string()))
    }

    /// Fetches the registry's latest record for this RP's IdP and compares
    /// it with a digest recomputed from the received artifacts.
    pub async fn verify_artifact_integrity(&self, artifacts: &ZkArtifacts) -> Result<(), RpError> {
        let record: DigestRecord = self
            .get_json(format!("{}/idp/{}/digest/latest", self.config.oidf_url, self.config.idp_id))
            .await
            .map_err(RpError::RegistryUnavailable)?;
        let local = artifacts.compute_digest();
        if local != record.artifact_digest {
            return Err(RpError::IntegrityMismatch(format!(
                "received artifacts hash to {}, registry published {}",
                hex::encode(local),
                hex::encode(record.artifact_digest)
            )));
        }
        if artifacts.version != record.version || !artifacts.is_self_consistent() {
            return Err(RpError::IntegrityMismatch("artifact metadata disagrees with the registry".into()));
        }
        Ok(())
    }

    /// Fail-closed form: an unreachable registry counts as a mismatch.
    pub async fn check_artifact_integrity(&self, artifacts: &ZkArtifacts) -> bool {
        self.verify_artifact_integrity(artifacts).await.is_ok()
    }

    fn check_program(program: &BoilerplateProgram, artifacts: &ZkArtifacts) -> Result<(), RpError> {
        if artifacts.program_digest != program.program_digest {
            return Err(RpError::IntegrityMismatch("artifacts were built for a different program".into()));
        }
        Ok(())
    }

    pub async fn register(&self) -> Result<Arc<RpState>, RpError> {
        let resp = self
            .http
            .post(format!("{}/register", self.config.idp_url))
            .json(&RegisterRequest {
                client_name: self.config.client_name.clone(),
                redirect_uri: self.config.proxy_redirect.clone(),
            })
            .send()
            .await
            .map_err(|e| RpError::Idp(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(RpError::Idp(error_message(resp).await));
        }
        let reg: RegisterResponse = resp.json().await.map_err(|e| RpError::Idp(e.to_string()))?;
        let credential = ClientCredential::from_bytes(&reg.credential).map_err(|_| RpError::InvalidCredential)?;
        if !credential.is_valid() {
            return Err(RpError::InvalidCredential);
        }
        let artifacts = ZkArtifacts::from_bytes(&reg.artifacts)
            .map_err(|e| RpError::IntegrityMismatch(format!("undecodable artifacts: {e}")))?;
        self.verify_artifact_integrity(&artifacts).await?;
        let program = self.fetch_program().await?;
        Self::check_program(&program, &artifacts)?;
        let token_key = self.fetch_token_key().await?;
        tracing::info!(client = self.config.client_name, version = artifacts.version, "registered");
        self.set_state(RpState {
            registration_token: reg.registration_token,
            credential,
            program,
            artifacts: Arc::new(artifacts),
            token_key,
            cached_proof: None,
        })
    }

    /// Restores a persisted registration. The artifacts are checked against
    /// the registry again before use.
    pub async fn restore(&self) -> Result<Arc<RpState>, RpError> {
        let dir = self.config.state_dir.as_ref().ok_or(RpError::Persist("no state directory".into()))?;
        let saved = persist::load(dir).map_err(|e| RpError::Persist(e.to_string()))?;
        if !saved.credential.is_valid() {
            return Err(RpError::InvalidCredential);
        }
        self.verify_artifact_integrity(&saved.artifacts).await?;
        let program = self.fetch_program().await?;
        Self::check_program(&program, &saved.artifacts)?;
        let cached_proof = saved.proof.filter(|p| p.artifact_version == saved.artifacts.version);
        let state = RpState {
            registration_token: saved.registration_token,
            credential: saved.credential,
            program,
            artifacts: Arc::new(saved.artifacts),
            token_key: self.fetch_token_key().await?,
            cached_proof,
        };
        *self.state.write().unwrap() = Some(Arc::new(state));
        self.require_state()
    }

    /// Returns the cached proof, or proves once under the current artifacts.
    pub async fn generate_proof(&self) -> Result<MembershipProof, RpError> {
        if let Some(p) = self.require_state()?.cached_proof.clone() {
            return Ok(p);
        }
        let _guard = self.prove_lock.lock().await;
        let state = self.require_state()?;
        if let Some(p) = state.cached_proof.clone() {
            return Ok(p);
        }
        let for_prover = state.clone();
        let proof = tokio::task::spawn_blocking(move || prove_membership(&for_prover))
            .await
            .map_err(|e| RpError::Proving(e.to_string()))??;
        self.set_state(RpState {
            registration_token: state.registration_token.clone(),
            credential: state.credential.clone(),
            program: state.program.clone(),
            artifacts: state.artifacts.clone(),
            token_key: state.token_key,
            cached_proof: Some(proof.clone()),
        })?;
        Ok(proof)
    }

    pub async fn initiate_login(&self, scope: &[&str]) -> Result<AuthRequest, RpError> {
        let proof = self.generate_proof().await?;
        let mut nonce = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        let state = hex::encode(nonce);
        self.pending_logins.lock().unwrap().insert(state.clone());
        Ok(AuthRequest {
            proof,
            scope: scope.iter().map(|s| s.to_string()).collect(),
            state,
            redirect_uri: self.config.proxy_redirect.clone(),
        })
    }

    /// Checks signature, expiry and that `expected_state` belongs to a login
    /// this RP started and has not yet completed.
    pub fn validate_token(&self, token: &str, expected_state: &str) -> Result<LoginOutcome, RpError> {
        let state = self.require_state()?;
        let claims = verify_token(token, &state.token_key, unix_now())?;
        if claims.nonce != expected_state {
            return Err(RpError::StateMismatch);
        }
        if !self.pending_logins.lock().unwrap().remove(expected_state) {
            return Err(RpError::StateMismatch);
        }
        Ok(LoginOutcome {
            subject: claims.sub,
            claims: claims.claims,
        })
    }

    /// Handles the fragment the user agent delivers to the callback.
    pub fn complete_login(&self, fragment: &str) -> Result<LoginOutcome, RpError> {
        let f = TokenFragment::from_fragment(fragment).map_err(|_| RpError::StateMismatch)?;
        self.validate_token(&f.id_token, &f.state)
    }

    /// Pulls the IdP's current artifacts. A new version replaces the old one
    /// and drops the cached proof; the same version keeps everything.
    pub async fn refresh_artifacts(&self) -> Result<u64, RpError> {
        let state = self.require_state()?;
        let resp = self
            .http
            .get(format!("{}/artifacts/current", self.config.idp_url))
            .bearer_auth(&state.registration_token)
            .send()
            .await
            .map_err(|e| RpError::Idp(e.to_string()))?;
        match resp.status() {
            StatusCode::FORBIDDEN => return Err(RpError::AccessDenied),
            s if !s.is_success() => return Err(RpError::Idp(error_message(resp).await)),
            _ => {}
        }
        let current: ArtifactsResponse = resp.json().await.map_err(|e| RpError::Idp(e.to_string()))?;
        if current.version == state.artifacts.version && current.artifact_digest == state.artifacts.artifact_digest {
            return Ok(current.version);
        }
        let artifacts = ZkArtifacts::from_bytes(&current.artifacts)
            .map_err(|e| RpError::IntegrityMismatch(format!("undecodable artifacts: {e}")))?;
        self.verify_artifact_integrity(&artifacts).await?;
        Self::check_program(&state.program, &artifacts)?;
        tracing::info!(
            client = self.config.client_name,
            from = state.artifacts.version,
            to = artifacts.version,
            "artifacts refreshed"
        );
        let version = artifacts.version;
        self.set_state(RpState {
            registration_token: state.registration_token.clone(),
            credential: state.credential.clone(),
            program: state.program.clone(),
            artifacts: Arc::new(artifacts),
            token_key: state.token_key,
            cached_proof: None,
        })?;
        Ok(version)
    }

    /// Reaction to a login the IdP refused. Stale or rejected proofs are the
    /// only signal of a rotation the RP gets besides polling.
    pub async fn on_login_error(&self, error_code: &str) -> Result<bool, RpError> {
        if error_code != "stale_artifacts" && error_code != "proof_invalid" {
            return Ok(false);
        }
        let before = self.require_state()?.artifacts.version;
        Ok(self.refresh_artifacts().await? != before)
    }

    /// Polls for rotations until the RP is dropped or deregistered.
    pub fn spawn_refresh_timer(self: &Arc<Self>, every: Duration) -> tokio::task::JoinHandle<()> {
        let weak = Arc::downgrade(self);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let Some(rp) = weak.upgrade() else { return };
                match rp.refresh_artifacts().await {
                    Err(RpError::AccessDenied) => return,
                    Err(e) => tracing::warn!("artifact poll failed: {e}"),
                    Ok(_) => {}
                }
            }
        })
    }

    pub async fn deregister(&self) -> Result<(), RpError> {
        let state = self.require_state()?;
        let resp = self
            .http
            .post(format!("{}/deregister", self.config.idp_url))
            .bearer_auth(&state.registration_token)
            .send()
            .await
            .map_err(|e| RpError::Idp(e.to_string()))?;
        match resp.status() {
            StatusCode::FORBIDDEN => Err(RpError::AccessDenied),
            s if s.is_success() => Ok(()),
            _ => Err(RpError::Idp(error_message(resp).await)),
        }
    }
}

fn prove_membership(state: &RpState) -> Result<MembershipProof, RpError> {
    let credential = &state.credential;
    if !credential.is_valid() {
        return Err(RpError::InvalidCredential);
    }
    let (cs, witness) = synthesize(&state.program, &membership_inputs(credential))
        .map_err(|e| RpError::Proving(e.to_string()))?;
    if cs.digest() != state.artifacts.proving_key.cs_digest() {
        return Err(RpError::IntegrityMismatch("proving key was not made for the boilerplate circuit".into()));
    }
    let proof = groth16::prove(&state.artifacts.proving_key, &witness, &mut rand::rngs::OsRng)
        .map_err(|e| RpError::Proving(e.to_string()))?;
    let public_inputs = membership_public_inputs(&credential.idp_credential_pk);
    if !groth16::verify(&state.artifacts.verification_key, &public_inputs, &proof) {
        return Err(RpError::Proving("fresh proof does not verify".into()));
    }
    Ok(MembershipProof {
        proof,
        public_inputs,
        artifact_version: state.artifacts.version,
    })
}

impl RpState {
    /// Bytes the RP must never emit during a login.
    pub fn secret_fragments(&self) -> Vec<Vec<u8>> {
        let mut w = Writer::default();
        w.fr(&self.credential.client_id);
        let id = w.into_bytes();
        let mut id_rev = id.clone();
        id_rev.reverse();
        vec![
            id,
            id_rev,
            self.credential.signature.to_bytes(),
            self.registration_token.as_bytes().to_vec(),
        ]
    }
}
