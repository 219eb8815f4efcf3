//! Identity-provider state and the protocol operations behind the HTTP API.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use ark_bn254::Fr;
use ark_ff::{BigInteger, PrimeField, UniformRand};
use ed25519_dalek::{SigningKey, VerifyingKey};
use expresso_core::api::{AllocationResponse, AuthRequest, AuthorizeResponse, ConsentResponse, TokenFragment};
use expresso_core::artifacts::ZkArtifacts;
use expresso_core::babyjubjub::BabyJubjub;
use expresso_core::circuit::membership_public_inputs;
use expresso_core::credential::ClientCredential;
use expresso_core::eddsa::SigningKeyPair;
use expresso_core::encoding::{Decode, Encode};
use expresso_core::groth16::{self, PreparedVerificationKey};
use expresso_core::membership::{derive_ppid, MembershipProof};
use expresso_core::r1cs::Digest32;
use expresso_core::token::{sign_token, IdTokenClaims};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::users::{LoginThrottle, UserRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdpError {
    #[error("registry unavailable: {0}")]
    RegistryUnavailable(String),
    #[error("not a currently registered client")]
    AccessDenied,
    #[error("proof was made for artifact version {presented}, current is {current}")]
    StaleArtifacts { presented: u64, current: u64 },
    #[error("membership proof rejected: {0}")]
    ProofInvalid(String),
    #[error("unknown or expired authorization request")]
    UnknownRequest,
    #[error("bad username or password")]
    BadCredentials,
    #[error("too many failed logins; try again later")]
    Throttled,
    #[error("unknown or expired session")]
    InvalidSession,
    #[error("consent covers claims that were not requested")]
    ConsentDenied,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("username already taken")]
    DuplicateUser,
}

#[derive(Debug, Clone)]
pub struct IdpConfig {
    pub idp_id: String,
    pub issuer: String,
    pub registry_url: String,
    pub token_ttl: Duration,
    pub pbkdf2_rounds: u32,
    pub max_login_failures: usize,
    pub throttle_window: Duration,
    pub request_ttl: Duration,
    pub session_ttl: Duration,
    /// Deterministic key material for tests; random when absent.
    pub key_seed: Option<[u8; 32]>,
}

impl IdpConfig {
    pub fn new(idp_id: &str, registry_url: &str) -> Self {
        Self {
            idp_id: idp_id.to_string(),
            issuer: format!("expresso:{idp_id}"),
            registry_url: registry_url.trim_end_matches('/').to_string(),
            token_ttl: Duration::from_secs(600),
            pbkdf2_rounds: 10_000,
            max_login_failures: 5,
            throttle_window: Duration::from_secs(60),
            request_ttl: Duration::from_secs(300),
            session_ttl: Duration::from_secs(1800),
            key_seed: None,
        }
    }
}

/// The artifact version currently used for verification.
pub struct ActiveArtifacts {
    pub artifacts: ZkArtifacts,
    pub container: Vec<u8>,
    pvk: PreparedVerificationKey,
}

impl ActiveArtifacts {
    fn new(artifacts: ZkArtifacts) -> Self {
        Self {
            container: artifacts.to_bytes(),
            pvk: artifacts.verification_key.prepare(),
            artifacts,
        }
    }

    pub fn version(&self) -> u64 {
        self.artifacts.version
    }
}

pub struct Registration {
    pub registration_token: String,
    pub credential: ClientCredential,
    pub artifacts: Arc<ActiveArtifacts>,
}

struct ClientEntry {
    name: String,
}

#[derive(Default)]
struct Clients {
    /// Keyed by the hash of the registration token.
    by_token: HashMap<Digest32, ClientEntry>,
    /// Hashes of every client_id ever issued, for uniqueness.
    issued: HashSet<Digest32>,
}

struct Session {
    username: String,
    expires: Instant,
}

struct PendingAuth {
    request: AuthRequest,
    verified_version: u64,
    expires: Instant,
}

/// Which endpoint an access-log line belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Registration,
    Authentication,
    Other,
}

#[derive(Debug, Clone)]
pub struct AccessLogEntry {
    pub peer: SocketAddr,
    pub method: String,
    pub path: String,
    pub endpoint: Endpoint,
}

pub struct IdentityProvider {
    config: IdpConfig,
    credential_key: SigningKeyPair<BabyJubjub>,
    token_key: SigningKey,
    http: reqwest::Client,
    active: RwLock<Option<Arc<ActiveArtifacts>>>,
    rotation_lock: tokio::sync::Mutex<()>,
    rotation_pending: AtomicBool,
    clients: Mutex<Clients>,
    users: RwLock<HashMap<String, UserRecord>>,
    sessions: Mutex<HashMap<String, Session>>,
    requests: Mutex<HashMap<String, PendingAuth>>,
    throttle: Mutex<LoginThrottle>,
    access_log: Mutex<Vec<AccessLogEntry>>,
}

fn sha256(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn random_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl IdentityProvider {
    pub fn new(config: IdpConfig) -> Self {
        let seed = config.key_seed.unwrap_or_else(|| {
            let mut s = [0u8; 32];
            rand::rngs::OsRng.fill_bytes(&mut s);
            s
        });
        let credential_seed = sha256(&[b"expresso/idp/credential-key", &seed]);
        let token_seed = sha256(&[b"expresso/idp/token-key", &seed]);
        let throttle = LoginThrottle::new(config.max_login_failures, config.throttle_window);
        Self {
            credential_key: SigningKeyPair::generate(&credential_seed).expect("32-byte seed"),
            token_key: SigningKey::from_bytes(&token_seed),
            http: reqwest::Client::new(),
            active: RwLock::new(None),
            rotation_lock: tokio::sync::Mutex::new(()),
            rotation_pending: AtomicBool::new(false),
            clients: Mutex::new(Clients::default()),
            users: RwLock::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            requests: Mutex::new(HashMap::new()),
            throttle: Mutex::new(throttle),
            access_log: Mutex::new(Vec::new()),
            config,
        }
    }

    pub fn config(&self) -> &IdpConfig {
        &self.config
    }

    pub fn credential_public_key(&self) -> expresso_core::babyjubjub::Point {
        self.credential_key.pk
    }

    pub fn token_verifying_key(&self) -> VerifyingKey {
        self.token_key.verifying_key()
    }

    pub fn active_artifacts(&self) -> Option<Arc<ActiveArtifacts>> {
        self.active.read().unwrap().clone()
    }

    pub fn rotation_pending(&self) -> bool {
        self.rotation_pending.load(Ordering::Acquire)
    }

    pub fn registered_clients(&self) -> usize {
        self.clients.lock().unwrap().by_token.len()
    }

    pub fn add_user(
        &self,
        username: &str,
        password: &str,
        attributes: BTreeMap<String, String>,
    ) -> Result<(), IdpError> {
        let record = UserRecord::new(username, password, attributes, self.config.pbkdf2_rounds);
        let mut users = self.users.write().unwrap();
        if users.contains_key(username) {
            return Err(IdpError::DuplicateUser);
        }
        users.insert(username.to_string(), record);
        Ok(())
    }

    async fn fetch_artifacts(&self) -> Result<ZkArtifacts, IdpError> {
        let unavailable = |e: String| IdpError::RegistryUnavailable(e);
        let url = format!("{}/idp/{}/artifacts", self.config.registry_url, self.config.idp_id);
        let resp = self.http.post(url).send().await.map_err(|e| unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            let status = resp.status();
            let body = resp.text().await.unwrap_or_default();
            return Err(unavailable(format!("{status}: {body}")));
        }
        let alloc: AllocationResponse = resp.json().await.map_err(|e| unavailable(e.to_string()))?;
        let artifacts = ZkArtifacts::from_bytes(&alloc.artifacts).map_err(|e| unavailable(e.to_string()))?;
        if !artifacts.is_self_consistent() || artifacts.artifact_digest != alloc.record.artifact_digest {
            return Err(unavailable("registry sent an inconsistent artifact".into()));
        }
        if artifacts.verification_key.num_public() != 2 {
            return Err(unavailable("artifact is not for the membership program".into()));
        }
        Ok(artifacts)
    }

    /// Returns the active artifacts, fetching the first version (or a
    /// deferred rotation) from the registry when needed.
    pub async fn ensure_artifacts(&self) -> Result<Arc<ActiveArtifacts>, IdpError> {
        if !self.rotation_pending() {
            if let Some(a) = self.active_artifacts() {
                return Ok(a);
            }
        }
        let _guard = self.rotation_lock.lock().await;
        if !self.rotation_pending() {
            if let Some(a) = self.active_artifacts() {
                return Ok(a);
            }
        }
        match self.fetch_artifacts().await {
            Ok(artifacts) => Ok(self.install(artifacts)),
            // A deferred rotation keeps the old key serving.
            Err(e) => self.active_artifacts().ok_or(e),
        }
    }

    fn install(&self, artifacts: ZkArtifacts) -> Arc<ActiveArtifacts> {
        let active = Arc::new(ActiveArtifacts::new(artifacts));
        *self.active.write().unwrap() = Some(active.clone());
        self.rotation_pending.store(false, Ordering::Release);
        tracing::info!(version = active.version(), "verification key activated");
        active
    }

    pub async fn register_client(&self, client_name: &str) -> Result<Registration, IdpError> {
        let artifacts = self.ensure_artifacts().await?;
        let mut rng = rand::rngs::OsRng;
        let mut clients = self.clients.lock().unwrap();
        let client_id = loop {
            let id = Fr::rand(&mut rng);
            if clients.issued.insert(sha256(&[&id.into_bigint().to_bytes_le()])) {
                break id;
            }
        };
        let credential = ClientCredential {
            client_id,
            signature: self.credential_key.sign(&client_id),
            idp_credential_pk: self.credential_key.pk,
        };
        let registration_token = random_token();
        clients.by_token.insert(
            sha256(&[registration_token.as_bytes()]),
            ClientEntry {
                name: client_name.to_string(),
            },
        );
        tracing::info!(client = client_name, "client registered");
        Ok(Registration {
            registration_token,
            credential,
            artifacts,
        })
    }

    fn is_registered(&self, token: &str) -> bool {
        self.clients.lock().unwrap().by_token.contains_key(&sha256(&[token.as_bytes()]))
    }

    /// The artifact endpoint: only currently registered clients get keys.
    pub async fn current_artifacts_for(&self, token: &str) -> Result<Arc<ActiveArtifacts>, IdpError> {
        if !self.is_registered(token) {
            return Err(IdpError::AccessDenied);
        }
        self.ensure_artifacts().await
    }

    /// Removes a client and rotates to fresh artifacts. If the registry is
    /// unreachable the client stays removed, the old key keeps serving, and
    /// the rotation is retried on the next use.
    pub async fn deregister(&self, token: &str) -> Result<u64, IdpError> {
        let removed = self.clients.lock().unwrap().by_token.remove(&sha256(&[token.as_bytes()]));
        let Some(entry) = removed else {
            return Err(IdpError::AccessDenied);
        };
        // The id hash stays in `issued` so the identifier is never reissued.
        tracing::info!(client = entry.name, "client deregistered");
        self.rotate_artifacts().await
    }

    pub async fn rotate_artifacts(&self) -> Result<u64, IdpError> {
        let _guard = self.rotation_lock.lock().await;
        self.rotation_pending.store(true, Ordering::Release);
        let artifacts = self.fetch_artifacts().await?;
        Ok(self.install(artifacts).version())
    }

    /// Checks a membership proof against the single active key. Returns the
    /// version it was checked under.
    pub fn verify_membership(&self, proof: &MembershipProof) -> Result<u64, IdpError> {
        let active = self.active_artifacts().ok_or(IdpError::ProofInvalid("no active verification key".into()))?;
        if proof.artifact_version != active.version() {
            return Err(IdpError::StaleArtifacts {
                presented: proof.artifact_version,
                current: active.version(),
            });
        }
        if proof.public_inputs != membership_public_inputs(&self.credential_key.pk) {
            return Err(IdpError::ProofInvalid("public inputs are not this IdP's key".into()));
        }
        groth16::verify_prepared(&active.pvk, &proof.public_inputs, &proof.proof)
            .map_err(|e| IdpError::ProofInvalid(e.to_string()))?;
        Ok(active.version())
    }

    /// `GET /authorize`: parse the request, verify the proof, park it until
    /// the user has logged in and consented.
    pub fn begin_authorization(&self, fragment: &str) -> Result<AuthorizeResponse, IdpError> {
        let request = AuthRequest::from_fragment(fragment).map_err(|e| IdpError::InvalidRequest(e.to_string()))?;
        let verified_version = self.verify_membership(&request.proof)?;
        let request_id = random_token();
        let scope = request.scope.clone();
        let mut requests = self.requests.lock().unwrap();
        let now = Instant::now();
        requests.retain(|_, p| p.expires > now);
        requests.insert(
            request_id.clone(),
            PendingAuth {
                request,
                verified_version,
                expires: now + self.config.request_ttl,
            },
        );
        Ok(AuthorizeResponse { request_id, scope })
    }

    pub fn login(&self, request_id: &str, username: &str, password: &str) -> Result<String, IdpError> {
        if !self.requests.lock().unwrap().contains_key(request_id) {
            return Err(IdpError::UnknownRequest);
        }
        let now = Instant::now();
        if self.throttle.lock().unwrap().is_throttled(username, now) {
            return Err(IdpError::Throttled);
        }
        let ok = self
            .users
            .read()
            .unwrap()
            .get(username)
            .is_some_and(|u| u.check_password(password, self.config.pbkdf2_rounds));
        let mut throttle = self.throttle.lock().unwrap();
        if !ok {
            throttle.record_failure(username, now);
            return Err(IdpError::BadCredentials);
        }
        throttle.clear(username);
        let session_id = random_token();
        self.sessions.lock().unwrap().insert(
            session_id.clone(),
            Session {
                username: username.to_string(),
                expires: now + self.config.session_ttl,
            },
        );
        Ok(session_id)
    }

    /// `POST /consent`: issue the token for the consented claims.
    pub fn consent(&self, request_id: &str, session_id: &str, granted: &[String]) -> Result<ConsentResponse, IdpError> {
        let now = Instant::now();
        let username = {
            let sessions = self.sessions.lock().unwrap();
            match sessions.get(session_id) {
                Some(s) if s.expires > now => s.username.clone(),
                _ => return Err(IdpError::InvalidSession),
            }
        };
        let pending = self.requests.lock().unwrap().remove(request_id).ok_or(IdpError::UnknownRequest)?;
        if pending.expires <= now {
            return Err(IdpError::UnknownRequest);
        }
        if granted.iter().any(|g| !pending.request.scope.contains(g)) {
            return Err(IdpError::ConsentDenied);
        }
        // Rotation between authorize and consent invalidates the request.
        let current = self.active_artifacts().map_or(0, |a| a.version());
        if pending.verified_version != current {
            return Err(IdpError::StaleArtifacts {
                presented: pending.verified_version,
                current,
            });
        }

        let users = self.users.read().unwrap();
        let user = users.get(&username).ok_or(IdpError::InvalidSession)?;
        let ppid = derive_ppid(&user.user_id, &pending.request.proof, &user.ppid_salt);
        let claims = user
            .attributes
            .iter()
            .filter(|(k, _)| granted.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let iat = unix_now();
        let token = sign_token(
            &IdTokenClaims {
                iss: self.config.issuer.clone(),
                sub: hex::encode(ppid),
                iat,
                exp: iat + self.config.token_ttl.as_secs(),
                nonce: pending.request.state.clone(),
                claims,
            },
            &self.token_key,
        );
        Ok(ConsentResponse {
            redirect_uri: pending.request.redirect_uri,
            fragment: TokenFragment {
                id_token: token,
                state: pending.request.state,
            }
            .to_fragment(),
        })
    }

    pub fn record_access(&self, entry: AccessLogEntry) {
        self.access_log.lock().unwrap().push(entry);
    }

    pub fn access_log(&self) -> Vec<AccessLogEntry> {
        self.access_log.lock().unwrap().clone()
    }
}
