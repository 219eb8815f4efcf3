//! HTTP front end for the IdP.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{ConnectInfo, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use expresso_core::api::{
    ArtifactsResponse, AuthorizeResponse, ConsentRequest, ConsentResponse, ErrorBody, LoginRequest, LoginResponse,
    RegisterRequest, RegisterResponse, TokenKeyResponse,
};
use expresso_core::encoding::Encode;
use tokio::net::TcpListener;

use crate::provider::{AccessLogEntry, Endpoint, IdentityProvider, IdpError};

struct ApiError(IdpError);

impl From<IdpError> for ApiError {
    fn from(e: IdpError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            IdpError::RegistryUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "registry_unavailable"),
            IdpError::AccessDenied => (StatusCode::FORBIDDEN, "access_denied"),
            IdpError::StaleArtifacts { .. } => (StatusCode::CONFLICT, "stale_artifacts"),
            IdpError::ProofInvalid(_) => (StatusCode::BAD_REQUEST, "proof_invalid"),
            IdpError::UnknownRequest => (StatusCode::NOT_FOUND, "unknown_request"),
            IdpError::BadCredentials => (StatusCode::UNAUTHORIZED, "bad_credentials"),
            IdpError::Throttled => (StatusCode::TOO_MANY_REQUESTS, "throttled"),
            IdpError::InvalidSession => (StatusCode::UNAUTHORIZED, "invalid_session"),
            IdpError::ConsentDenied => (StatusCode::FORBIDDEN, "consent_denied"),
            IdpError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            IdpError::DuplicateUser => (StatusCode::CONFLICT, "duplicate_user"),
        };
        let body = ErrorBody {
            error: code.to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<IdentityProvider>;

pub fn router(idp: Shared) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/deregister", post(deregister))
        .route("/artifacts/current", get(current_artifacts))
        .route("/authorize", get(authorize))
        .route("/login", post(login))
        .route("/consent", post(consent))
        .route("/token-signing-key", get(token_key))
        .layer(middleware::from_fn_with_state(idp.clone(), access_log))
        .with_state(idp)
}

pub async fn serve(idp: Shared, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(idp).into_make_service_with_connect_info::<SocketAddr>()).await
}

async fn access_log(State(idp): State<Shared>, request: Request, next: Next) -> Response {
    if let Some(ConnectInfo(peer)) = request.extensions().get::<ConnectInfo<SocketAddr>>() {
        let path = request.uri().path().to_string();
        let endpoint = match path.as_str() {
            "/authorize" | "/login" | "/consent" => Endpoint::Authentication,
            "/register" | "/deregister" | "/artifacts/current" => Endpoint::Registration,
            _ => Endpoint::Other,
        };
        idp.record_access(AccessLogEntry {
            peer: *peer,
            method: request.method().to_string(),
            path,
            endpoint,
        });
    }
    next.run(request).await
}

fn bearer(headers: &HeaderMap) -> Result<&str, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ApiError(IdpError::AccessDenied))
}

async fn register(State(idp): State<Shared>, Json(req): Json<RegisterRequest>) -> Result<Json<RegisterResponse>, ApiError> {
    if req.client_name.is_empty() {
        return Err(IdpError::InvalidRequest("client_name is required".into()).into());
    }
    let reg = idp.register_client(&req.client_name).await?;
    Ok(Json(RegisterResponse {
        registration_token: reg.registration_token,
        credential: reg.credential.to_bytes(),
        artifacts: reg.artifacts.container.clone(),
    }))
}

async fn deregister(State(idp): State<Shared>, headers: HeaderMap) -> Result<StatusCode, ApiError> {
    let token = bearer(&headers)?;
    match idp.deregister(token).await {
        Ok(_) => Ok(StatusCode::NO_CONTENT),
        // Removal already happened; rotation is retried on next use.
        Err(IdpError::RegistryUnavailable(e)) => {
            tracing::warn!("rotation deferred: {e}");
            Ok(StatusCode::ACCEPTED)
        }
        Err(e) => Err(e.into()),
    }
}

async fn current_artifacts(State(idp): State<Shared>, headers: HeaderMap) -> Result<Json<ArtifactsResponse>, ApiError> {
    let active = idp.current_artifacts_for(bearer(&headers)?).await?;
    Ok(Json(ArtifactsResponse {
        version: active.version(),
        artifact_digest: active.artifacts.artifact_digest,
        artifacts: active.container.clone(),
    }))
}

async fn authorize(
    State(idp): State<Shared>,
    axum::extract::RawQuery(query): axum::extract::RawQuery,
) -> Result<Json<AuthorizeResponse>, ApiError> {
    let query = query.ok_or(IdpError::InvalidRequest("missing parameters".into()))?;
    let idp2 = idp.clone();
    let resp = tokio::task::spawn_blocking(move || idp2.begin_authorization(&query))
        .await
        .map_err(|e| IdpError::InvalidRequest(e.to_string()))??;
    Ok(Json(resp))
}

async fn login(State(idp): State<Shared>, Json(req): Json<LoginRequest>) -> Result<Json<LoginResponse>, ApiError> {
    let session_id = tokio::task::spawn_blocking(move || idp.login(&req.request_id, &req.username, &req.password))
        .await
        .map_err(|e| IdpError::InvalidRequest(e.to_string()))??;
    Ok(Json(LoginResponse { session_id }))
}

async fn consent(State(idp): State<Shared>, Json(req): Json<ConsentRequest>) -> Result<Json<ConsentResponse>, ApiError> {
    Ok(Json(idp.consent(&req.request_id, &req.session_id, &req.granted)?))
}

async fn token_key(State(idp): State<Shared>) -> Json<TokenKeyResponse> {
    Json(TokenKeyResponse {
        alg: "EdDSA".to_string(),
        key: idp.token_verifying_key().to_bytes().to_vec(),
    })
}
