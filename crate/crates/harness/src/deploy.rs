//! An in-process deployment: registry, one IdP, any number of RPs and a user
//! agent, all speaking HTTP over loopback.
//!
//! Each role gets its own loopback address so request logs can tell them
//! apart: IdP and registry on 127.0.0.1, RPs on 127.0.0.2, the user agent on
//! 127.0.0.3.

use std::collections::{BTreeMap, HashMap};
use std::net::{IpAddr, Ipv4Addr};
use std::sync::{Arc, RwLock};

use anyhow::{anyhow, bail, Context};
use expresso_core::api::CallbackResponse;
use expresso_core::ceremony::{phase1_generate, CeremonyState, Phase1Parameters};
use expresso_core::circuit::{compile, BoilerplateProgram};
use expresso_core::groth16::domain_size;
use expresso_idp::{Endpoint, IdentityProvider, IdpConfig};
use expresso_oidf::{CeremonySource, Registry, RegistryConfig};
use expresso_rp::{RelyingParty, RpConfig};
use rand::RngCore;
use tokio::net::TcpListener;

use crate::agent::{AgentError, Credentials, UserAgent, DEFAULT_FRAGMENT_LIMIT};

pub const SERVICE_HOST: IpAddr = IpAddr::V4(Ipv4Addr::new(127, 0, 0, 1));
pub const RP_HOST: IpAddr = IpAddr::V4(Ipv4Addr::new(127, 0, 0, 2));
pub const AGENT_HOST: IpAddr = IpAddr::V4(Ipv4Addr::new(127, 0, 0, 3));

#[derive(Debug, Clone)]
pub struct DeploymentConfig {
    pub idp_id: String,
    /// Other enrolled IdPs; only used by attack drills.
    pub other_idps: Vec<String>,
    pub pool_size: usize,
    pub low_watermark: usize,
    pub pbkdf2_rounds: u32,
    pub fragment_limit: usize,
    pub users: Vec<UserSpec>,
}

#[derive(Debug, Clone)]
pub struct UserSpec {
    pub username: String,
    pub password: String,
    pub attributes: BTreeMap<String, String>,
}

impl UserSpec {
    pub fn new(username: &str, password: &str) -> Self {
        Self {
            username: username.to_string(),
            password: password.to_string(),
            attributes: BTreeMap::from([
                ("name".to_string(), username.to_string()),
                ("email".to_string(), format!("{username}@example.org")),
            ]),
        }
    }
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            idp_id: "idp".to_string(),
            other_idps: vec!["idp-other".to_string()],
            pool_size: 4,
            low_watermark: 0,
            pbkdf2_rounds: 10_000,
            fragment_limit: DEFAULT_FRAGMENT_LIMIT,
            users: (0..5).map(|i| UserSpec::new(&format!("user{i}"), &format!("password-{i}"))).collect(),
        }
    }
}

/// Phase-1 parameters and the initialised phase-2 state for the membership
/// program, shared by every artifact the registry mints.
pub struct Setup {
    pub program: BoilerplateProgram,
    pub phase1: Phase1Parameters,
    pub initial: CeremonyState,
    pub source: Arc<CeremonySource>,
}

impl Setup {
    pub fn membership(contributors: &[&str], seed: &[u8]) -> anyhow::Result<Self> {
        let program = BoilerplateProgram::membership();
        let cs = compile(&program)?;
        let phase1 = phase1_generate(domain_size(&cs)?, seed)?;
        let initial = CeremonyState::initialize(&phase1, &cs, program.program_digest)?;
        let source = Arc::new(CeremonySource::from_initial(
            program.clone(),
            cs,
            initial.clone(),
            contributors.iter().map(|c| c.to_string()).collect(),
            "harness beacon",
        ));
        Ok(Self {
            program,
            phase1,
            initial,
            source,
        })
    }
}

pub struct RpHandle {
    pub rp: Arc<RelyingParty>,
    pub proxy_handle: String,
    pub callback_url: String,
}

pub struct Deployment {
    pub config: DeploymentConfig,
    pub registry: Arc<Registry>,
    pub oidf_url: String,
    pub idp: Arc<IdentityProvider>,
    pub idp_url: String,
    pub agent: UserAgent,
    pub source: Arc<CeremonySource>,
    rps: RwLock<HashMap<String, Arc<RpHandle>>>,
    passwords: HashMap<String, String>,
    retired: RwLock<Vec<Vec<u8>>>,
}

pub async fn listen(host: IpAddr) -> anyhow::Result<(TcpListener, String)> {
    let listener = TcpListener::bind((host, 0)).await.with_context(|| format!("binding {host}"))?;
    let url = format!("http://{}", listener.local_addr()?);
    Ok((listener, url))
}

impl Deployment {
    pub async fn start(config: DeploymentConfig, source: Arc<CeremonySource>) -> anyhow::Result<Self> {
        let registry_config = RegistryConfig {
            enrolled: std::iter::once(config.idp_id.clone()).chain(config.other_idps.iter().cloned()).collect(),
            low_watermark: config.low_watermark,
            replenish_batch: 1,
            data_dir: None,
        };
        let pool = config.pool_size;
        let ceremony = source.clone();
        let registry = tokio::task::spawn_blocking(move || -> anyhow::Result<Arc<Registry>> {
            let r = Arc::new(Registry::open(registry_config, ceremony)?);
            r.replenish(pool)?;
            Ok(r)
        })
        .await??;
        let (listener, oidf_url) = listen(SERVICE_HOST).await?;
        tokio::spawn(expresso_oidf::serve(registry.clone(), listener));

        let mut idp_config = IdpConfig::new(&config.idp_id, &oidf_url);
        idp_config.pbkdf2_rounds = config.pbkdf2_rounds;
        let idp = Arc::new(IdentityProvider::new(idp_config));
        let mut passwords = HashMap::new();
        for u in &config.users {
            idp.add_user(&u.username, &u.password, u.attributes.clone())?;
            passwords.insert(u.username.clone(), u.password.clone());
        }
        let (listener, idp_url) = listen(SERVICE_HOST).await?;
        tokio::spawn(expresso_idp::serve(idp.clone(), listener));

        let agent = UserAgent::new(Some(AGENT_HOST), config.fragment_limit)?;
        Ok(Self {
            config,
            registry,
            oidf_url,
            idp,
            idp_url,
            agent,
            source,
            rps: RwLock::new(HashMap::new()),
            passwords,
            retired: RwLock::new(Vec::new()),
        })
    }

    pub fn rp_config(&self, name: &str, idp_url: &str) -> (RpConfig, String) {
        let mut handle = [0u8; 8];
        rand::rngs::OsRng.fill_bytes(&mut handle);
        let proxy = format!("https://redirect.example/h/{}", hex::encode(handle));
        let mut config = RpConfig::new(name, idp_url, &self.config.idp_id, &self.oidf_url, &proxy);
        config.bind_address = Some(RP_HOST);
        (config, proxy)
    }

    /// Starts an RP's callback listener, wires its proxy handle into the
    /// user agent and registers it with the IdP.
    pub async fn add_rp(&self, name: &str) -> anyhow::Result<Arc<RpHandle>> {
        if self.rps.read().unwrap().contains_key(name) {
            bail!("RP {name} already exists");
        }
        let (config, proxy_handle) = self.rp_config(name, &self.idp_url);
        let rp = Arc::new(RelyingParty::new(config)?);
        let (listener, base) = listen(RP_HOST).await?;
        tokio::spawn(expresso_rp::serve_callback(rp.clone(), listener));
        let callback_url = format!("{base}/callback");
        rp.register().await.with_context(|| format!("registering {name}"))?;
        self.agent.register_proxy(&proxy_handle, &callback_url);
        let handle = Arc::new(RpHandle {
            rp,
            proxy_handle,
            callback_url,
        });
        self.rps.write().unwrap().insert(name.to_string(), handle.clone());
        Ok(handle)
    }

    pub fn rp(&self, name: &str) -> anyhow::Result<Arc<RpHandle>> {
        self.rps.read().unwrap().get(name).cloned().ok_or_else(|| anyhow!("unknown RP {name}"))
    }

    pub fn rp_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.rps.read().unwrap().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn password(&self, user: &str) -> anyhow::Result<&str> {
        self.passwords.get(user).map(String::as_str).ok_or_else(|| anyhow!("unknown user {user}"))
    }

    /// Full login of `user` at `rp` through the user agent.
    pub async fn login(&self, user: &str, rp: &str, scope: &[&str]) -> anyhow::Result<Result<CallbackResponse, AgentError>> {
        let handle = self.rp(rp)?;
        let request = handle.rp.initiate_login(scope).await?;
        let password = self.password(user)?;
        Ok(self
            .agent
            .login(
                &self.idp_url,
                &request,
                Credentials {
                    username: user,
                    password,
                },
                None,
            )
            .await)
    }

    /// Deregisters `rp`. The container the IdP held before is kept, since
    /// a dishonest IdP would keep it too.
    pub async fn deregister(&self, rp: &str) -> anyhow::Result<()> {
        let before = self.idp.active_artifacts();
        self.rp(rp)?.rp.deregister().await?;
        if let (Some(old), Some(new)) = (before, self.idp.active_artifacts()) {
            if old.version() != new.version() {
                self.retired.write().unwrap().push(old.container.clone());
            }
        }
        Ok(())
    }

    /// Artifact containers the IdP has rotated away from, oldest first.
    pub fn retired_artifacts(&self) -> Vec<Vec<u8>> {
        self.retired.read().unwrap().clone()
    }

    /// Peers seen by the IdP on its authentication endpoints.
    pub fn authentication_peers(&self) -> Vec<IpAddr> {
        self.idp
            .access_log()
            .into_iter()
            .filter(|e| e.endpoint == Endpoint::Authentication)
            .map(|e| e.peer.ip())
            .collect()
    }

    /// Authentication requests that arrived from an RP address.
    pub fn rp_addresses_in_idp_log(&self) -> usize {
        self.authentication_peers().into_iter().filter(|ip| *ip == RP_HOST).count()
    }
}
