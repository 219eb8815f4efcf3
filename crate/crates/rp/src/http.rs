//! The RP's callback endpoint.

use std::sync::Arc;

use axum::extract::{RawQuery, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use expresso_core::api::{CallbackResponse, ErrorBody};
use tokio::net::TcpListener;

use crate::client::{RelyingParty, RpError};

/// `GET /callback?id_token=..&state=..`: the user agent turns the token
/// fragment into a query when it delivers it.
pub fn callback_router(rp: Arc<RelyingParty>) -> Router {
    Router::new().route("/callback", get(callback)).with_state(rp)
}

pub async fn serve_callback(rp: Arc<RelyingParty>, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, callback_router(rp)).await
}

async fn callback(State(rp): State<Arc<RelyingParty>>, RawQuery(query): RawQuery) -> Response {
    match rp.complete_login(query.as_deref().unwrap_or_default()) {
        Ok(outcome) => Json(CallbackResponse {
            subject: outcome.subject,
            claims: outcome.claims,
        })
        .into_response(),
        Err(e) => {
            let code = match &e {
                RpError::Token(_) => "invalid_token",
                RpError::StateMismatch => "state_mismatch",
                _ => "not_ready",
            };
            let body = ErrorBody {
                error: code.to_string(),
                message: e.to_string(),
            };
            (StatusCode::BAD_REQUEST, Json(body)).into_response()
        }
    }
}
