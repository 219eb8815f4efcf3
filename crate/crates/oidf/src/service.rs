//! HTTP front end for the registry.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use expresso_core::api::{AllocationResponse, BlobResponse, BoilerplateResponse, DigestRecord, ErrorBody};
use expresso_core::encoding::Encode;
use expresso_core::r1cs::Digest32;
use tokio::net::TcpListener;

use crate::pool::{Registry, RegistryError};

struct ApiError(StatusCode, &'static str, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.1.to_string(),
            message: self.2,
        };
        (self.0, Json(body)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let (status, code) = match &e {
            RegistryError::UnknownIdP(_) => (StatusCode::NOT_FOUND, "unknown_idp"),
            RegistryError::NoAllocation(_) => (StatusCode::NOT_FOUND, "no_allocation"),
            RegistryError::PoolExhausted => (StatusCode::SERVICE_UNAVAILABLE, "pool_exhausted"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError(status, code, e.to_string())
    }
}

type Shared = Arc<Registry>;

pub fn router(registry: Shared) -> Router {
    Router::new()
        .route("/boilerplate", get(boilerplate))
        .route("/idp/{id}/digest/latest", get(latest))
        .route("/idp/{id}/digest/history", get(history))
        .route("/idp/{id}/artifacts", post(allocate))
        .route("/blob/{digest}", get(blob))
        .with_state(registry)
}

pub async fn serve(registry: Shared, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(registry)).await
}

async fn boilerplate(State(r): State<Shared>) -> Json<BoilerplateResponse> {
    Json(BoilerplateResponse::from(r.program()))
}

async fn latest(State(r): State<Shared>, Path(id): Path<String>) -> Result<Json<DigestRecord>, ApiError> {
    Ok(Json(r.latest_digest(&id)?))
}

async fn history(State(r): State<Shared>, Path(id): Path<String>) -> Result<Json<Vec<DigestRecord>>, ApiError> {
    Ok(Json(r.history(&id)?))
}

async fn allocate(State(r): State<Shared>, Path(id): Path<String>) -> Result<Json<AllocationResponse>, ApiError> {
    let registry = r.clone();
    let (record, artifacts) = tokio::task::spawn_blocking(move || registry.request_artifacts(&id))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    if r.below_watermark() {
        tokio::task::spawn_blocking(move || {
            if let Err(e) = r.maintain() {
                tracing::warn!("replenishment failed: {e}");
            }
        });
    }
    Ok(Json(AllocationResponse {
        record,
        artifacts: artifacts.to_bytes(),
    }))
}

async fn blob(State(r): State<Shared>, Path(digest): Path<String>) -> Result<Json<BlobResponse>, ApiError> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, "not_found", format!("no blob {digest}"));
    let parsed: Digest32 = hex::decode(&digest)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(not_found)?;
    let data = r.blob(&parsed).ok_or_else(not_found)?;
    Ok(Json(BlobResponse {
        digest: parsed,
        data: data.as_ref().clone(),
    }))
}
