//! The simulated user agent.
//!
//! Carries the RP's authorization request to the IdP, plays the user at the
//! login and consent pages, and delivers the token fragment to the RP's real
//! callback through a proxy-handle table. The IdP only ever talks to this
//! agent, so its logs see the agent's address and nothing that names the RP.

use std::collections::HashMap;
use std::net::IpAddr;
use std::sync::RwLock;
use std::time::Duration;

use expresso_core::api::{
    AuthRequest, AuthorizeResponse, CallbackResponse, ConsentRequest, ConsentResponse, ErrorBody, LoginRequest,
    LoginResponse,
};
use serde::de::DeserializeOwned;
use thiserror::Error;

pub const DEFAULT_FRAGMENT_LIMIT: usize = 8 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("payload of {size} bytes exceeds the {limit}-byte fragment limit")]
    TooLarge { size: usize, limit: usize },
    #[error("relay to {0} failed: {1}")]
    Transport(String, String),
    #[error("{step} rejected with {status} {code}")]
    Rejected { step: &'static str, status: u16, code: String },
    #[error("no callback registered for redirect handle {0}")]
    UnknownHandle(String),
}

impl AgentError {
    /// The server's error code, when the failure came from a server.
    pub fn code(&self) -> Option<&str> {
        match self {
            AgentError::Rejected { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub struct Credentials<'a> {
    pub username: &'a str,
    pub password: &'a str,
}

pub struct UserAgent {
    http: reqwest::Client,
    fragment_limit: usize,
    proxies: RwLock<HashMap<String, String>>,
}

impl UserAgent {
    pub fn new(bind: Option<IpAddr>, fragment_limit: usize) -> reqwest::Result<Self> {
        let mut builder = reqwest::Client::builder()
            .timeout(Duration::from_secs(120))
            .redirect(reqwest::redirect::Policy::none())
            .referer(false);
        if let Some(addr) = bind {
            builder = builder.local_address(addr);
        }
        Ok(Self {
            http: builder.build()?,
            fragment_limit,
            proxies: RwLock::new(HashMap::new()),
        })
    }

    pub fn fragment_limit(&self) -> usize {
        self.fragment_limit
    }

    /// Maps a proxy redirect handle to the RP callback it stands for.
    pub fn register_proxy(&self, handle: &str, callback: &str) {
        self.proxies.write().unwrap().insert(handle.to_string(), callback.to_string());
    }

    pub fn resolve(&self, handle: &str) -> Result<String, AgentError> {
        self.proxies
            .read()
            .unwrap()
            .get(handle)
            .cloned()
            .ok_or_else(|| AgentError::UnknownHandle(handle.to_string()))
    }

    /// Relays fragment parameters as the query of a GET to `to`, unchanged
    /// and without any header naming where they came from.
    pub async fn forward(&self, to: &str, payload: &str) -> Result<reqwest::Response, AgentError> {
        if payload.len() > self.fragment_limit {
            return Err(AgentError::TooLarge {
                size: payload.len(),
                limit: self.fragment_limit,
            });
        }
        self.http
            .get(format!("{to}?{payload}"))
            .send()
            .await
            .map_err(|e| AgentError::Transport(to.to_string(), e.to_string()))
    }

    async fn read<T: DeserializeOwned>(step: &'static str, resp: reqwest::Response) -> Result<T, AgentError> {
        let status = resp.status();
        if !status.is_success() {
            let code = resp
                .json::<ErrorBody>()
                .await
                .map(|e| e.error)
                .unwrap_or_else(|_| "unknown".to_string());
            return Err(AgentError::Rejected {
                step,
                status: status.as_u16(),
                code,
            });
        }
        resp.json()
            .await
            .map_err(|e| AgentError::Transport(step.to_string(), e.to_string()))
    }

    async fn post<B: serde::Serialize, T: DeserializeOwned>(
        &self,
        step: &'static str,
        url: String,
        body: &B,
    ) -> Result<T, AgentError> {
        let resp = self
            .http
            .post(&url)
            .json(body)
            .send()
            .await
            .map_err(|e| AgentError::Transport(url, e.to_string()))?;
        Self::read(step, resp).await
    }

    /// One implicit-flow login: authorize, authenticate, consent to
    /// `consent` (everything requested when `None`), deliver the token.
    pub async fn login(
        &self,
        idp_url: &str,
        request: &AuthRequest,
        user: Credentials<'_>,
        consent: Option<&[String]>,
    ) -> Result<CallbackResponse, AgentError> {
        let resp = self.forward(&format!("{idp_url}/authorize"), &request.to_fragment()).await?;
        let auth: AuthorizeResponse = Self::read("authorize", resp).await?;
        let login: LoginResponse = self
            .post(
                "login",
                format!("{idp_url}/login"),
                &LoginRequest {
                    request_id: auth.request_id.clone(),
                    username: user.username.to_string(),
                    password: user.password.to_string(),
                },
            )
            .await?;
        let granted = consent.map(<[String]>::to_vec).unwrap_or(auth.scope);
        let consented: ConsentResponse = self
            .post(
                "consent",
                format!("{idp_url}/consent"),
                &ConsentRequest {
                    request_id: auth.request_id,
                    session_id: login.session_id,
                    granted,
                },
            )
            .await?;
        let callback = self.resolve(&consented.redirect_uri)?;
        let resp = self.forward(&callback, &consented.fragment).await?;
        Self::read("callback", resp).await
    }
}
