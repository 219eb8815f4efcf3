use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use expresso_core::api::{AuthRequest, AuthorizeResponse, ConsentRequest, ConsentResponse, LoginRequest, LoginResponse, TokenFragment};
use expresso_core::ceremony::phase1_generate;
use expresso_core::circuit::{compile, BoilerplateProgram};
use expresso_core::encoding::Encode;
use expresso_core::groth16::domain_size;
use expresso_core::token::{sign_token, verify_token, TokenError};
use expresso_idp::{IdentityProvider, IdpConfig};
use expresso_oidf::{CeremonySource, Registry, RegistryConfig};
use expresso_rp::{RelyingParty, RpConfig, RpError};

fn source() -> Arc<CeremonySource> {
    static SOURCE: OnceLock<Arc<CeremonySource>> = OnceLock::new();
    SOURCE
        .get_or_init(|| {
            let program = BoilerplateProgram::membership();
            let cs = compile(&program).unwrap();
            let phase1 = phase1_generate(domain_size(&cs).unwrap(), b"rp-tests").unwrap();
            Arc::new(CeremonySource::new(program, &phase1, vec!["p1".into()], "rp beacon").unwrap())
        })
        .clone()
}

struct Env {
    oidf_url: String,
    idp_url: String,
    idp: Arc<IdentityProvider>,
    http: reqwest::Client,
}

async fn start(pool: usize) -> Env {
    let source = source();
    let registry = tokio::task::spawn_blocking(move || {
        let config = RegistryConfig {
            enrolled: vec!["idp".into()],
            ..RegistryConfig::default()
        };
        let r = Arc::new(Registry::open(config, source).unwrap());
        r.replenish(pool).unwrap();
        r
    })
    .await
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let oidf_url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(expresso_oidf::serve(registry, listener));

    let mut config = IdpConfig::new("idp", &oidf_url);
    config.pbkdf2_rounds = 1000;
    let idp = Arc::new(IdentityProvider::new(config));
    idp.add_user("alice", "pw", BTreeMap::from([("name".to_string(), "Alice".to_string())])).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let idp_url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(expresso_idp::serve(idp.clone(), listener));
    Env {
        oidf_url,
        idp_url,
        idp,
        http: reqwest::Client::new(),
    }
}

impl Env {
    fn rp(&self, name: &str) -> RelyingParty {
        RelyingParty::new(self.config(name)).unwrap()
    }

    fn config(&self, name: &str) -> RpConfig {
        RpConfig::new(name, &self.idp_url, "idp", &self.oidf_url, &format!("https://proxy.invalid/{name}"))
    }

    /// Minimal user agent: authorize, log in as alice, consent to all.
    async fn login(&self, request: &AuthRequest) -> Result<TokenFragment, String> {
        let resp = self.http.get(format!("{}/authorize?{}", self.idp_url, request.to_fragment())).send().await.unwrap();
        if !resp.status().is_success() {
            return Err(resp.json::<expresso_core::api::ErrorBody>().await.unwrap().error);
        }
        let auth: AuthorizeResponse = resp.json().await.unwrap();
        let login: LoginResponse = self
            .http
            .post(format!("{}/login", self.idp_url))
            .json(&LoginRequest {
                request_id: auth.request_id.clone(),
                username: "alice".into(),
                password: "pw".into(),
            })
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let consent: ConsentResponse = self
            .http
            .post(format!("{}/consent", self.idp_url))
            .json(&ConsentRequest {
                request_id: auth.request_id,
                session_id: login.session_id,
                granted: auth.scope,
            })
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        Ok(TokenFragment::from_fragment(&consent.fragment).unwrap())
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn register_prove_once_and_log_in() {
    let env = start(1).await;
    let rp = env.rp("shop");
    let state = rp.register().await.unwrap();
    assert!(state.credential.is_valid());
    assert!(rp.check_artifact_integrity(&state.artifacts).await);

    let first = rp.generate_proof().await.unwrap();
    let t = Instant::now();
    let second = rp.generate_proof().await.unwrap();
    assert!(t.elapsed().as_millis() < 50);
    assert_eq!(first, second);
    assert!(first.to_bytes().len() <= 4096);

    let mut subjects = Vec::new();
    for _ in 0..2 {
        let request = rp.initiate_login(&["name"]).await.unwrap();
        let fragment = request.to_fragment();
        for secret in rp.state().unwrap().secret_fragments() {
            assert!(!fragment.as_bytes().windows(secret.len()).any(|w| w == secret));
            assert!(!fragment.contains(&hex::encode(&secret)));
        }
        let token = env.login(&request).await.unwrap();
        let outcome = rp.validate_token(&token.id_token, &token.state).unwrap();
        assert_eq!(outcome.claims["name"], "Alice");
        subjects.push(outcome.subject);
        // A token is accepted once per login.
        assert!(matches!(rp.validate_token(&token.id_token, &token.state), Err(RpError::StateMismatch)));
    }
    // Cached proof, same user: stable pseudonym.
    assert_eq!(subjects[0], subjects[1]);

    let request = rp.initiate_login(&["name"]).await.unwrap();
    let other = rp.initiate_login(&["name"]).await.unwrap();
    assert_ne!(request.state, other.state);
    let token = env.login(&request).await.unwrap();
    assert!(matches!(rp.validate_token(&token.id_token, &other.state), Err(RpError::StateMismatch)));

    let claims = verify_token(&token.id_token, &env.idp.token_verifying_key(), 0).unwrap();
    let forged = sign_token(&claims, &ed25519_dalek::SigningKey::from_bytes(&[9u8; 32]));
    assert!(matches!(
        rp.validate_token(&forged, &token.state),
        Err(RpError::Token(TokenError::BadSignature))
    ));
}

#[tokio::test(flavor = "multi_thread")]
async fn integrity_and_refresh() {
    let env = start(2).await;
    let staying = env.rp("staying");
    let leaving = env.rp("leaving");
    staying.register().await.unwrap();
    leaving.register().await.unwrap();
    let old = staying.state().unwrap().artifacts.clone();

    let mut flipped = (*old).clone();
    flipped.proving_key.a_query[0] = (flipped.proving_key.a_query[0] + flipped.proving_key.a_query[0]).into();
    assert!(!staying.check_artifact_integrity(&flipped).await);

    staying.generate_proof().await.unwrap();
    assert_eq!(staying.refresh_artifacts().await.unwrap(), 1);
    assert!(staying.state().unwrap().cached_proof.is_some());

    leaving.deregister().await.unwrap();
    assert!(matches!(leaving.refresh_artifacts().await, Err(RpError::AccessDenied)));
    // The old version no longer matches the registry's latest record.
    assert!(!staying.check_artifact_integrity(&old).await);

    let stale = staying.initiate_login(&["name"]).await.unwrap();
    let code = env.login(&stale).await.unwrap_err();
    assert_eq!(code, "stale_artifacts");
    assert!(staying.on_login_error(&code).await.unwrap());
    let state = staying.state().unwrap();
    assert_eq!(state.artifacts.version, 2);
    assert!(state.cached_proof.is_none());

    let request = staying.initiate_login(&["name"]).await.unwrap();
    assert_eq!(request.proof.artifact_version, 2);
    let token = env.login(&request).await.unwrap();
    staying.validate_token(&token.id_token, &token.state).unwrap();

    let mut dead = env.config("dead");
    dead.oidf_url = "http://127.0.0.1:9".into();
    let offline = RelyingParty::new(dead).unwrap();
    assert!(!offline.check_artifact_integrity(&state.artifacts).await);
}

#[tokio::test(flavor = "multi_thread")]
async fn persisted_state_survives_restart() {
    let env = start(1).await;
    let dir = tempfile::tempdir().unwrap();
    let mut config = env.config("durable");
    config.state_dir = Some(dir.path().to_path_buf());
    let rp = RelyingParty::new(config.clone()).unwrap();
    rp.register().await.unwrap();
    let proof = rp.generate_proof().await.unwrap();

    let restarted = RelyingParty::new(config).unwrap();
    let state = restarted.restore().await.unwrap();
    assert_eq!(state.cached_proof.as_ref(), Some(&proof));
    assert_eq!(state.credential, rp.state().unwrap().credential);
    let request = restarted.initiate_login(&["name"]).await.unwrap();
    let token = env.login(&request).await.unwrap();
    restarted.validate_token(&token.id_token, &token.state).unwrap();
}
