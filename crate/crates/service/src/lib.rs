//! HTTP JSON API over a loaded model bundle and candidate pool.
//!
//! The router answers 503 on model-dependent routes until an [`Engine`] is
//! installed. After that the engine is immutable and shared without locks.

pub mod api;

use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;

pub use api::{ApiError, Engine};

#[derive(Clone, Default)]
pub struct AppState {
    engine: Arc<OnceLock<Arc<Engine>>>,
}

impl AppState {
    /// A state with no model; every model route answers 503 until [`AppState::install`].
    pub fn loading() -> AppState {
        AppState::default()
    }

    pub fn ready(engine: Engine) -> AppState {
        let s = AppState::default();
        s.install(engine);
        s
    }

    /// Returns false if an engine was already installed; the first one stays.
    pub fn install(&self, engine: Engine) -> bool {
        self.engine.set(Arc::new(engine)).is_ok()
    }

    pub fn is_ready(&self) -> bool {
        self.engine.get().is_some()
    }

    fn engine(&self) -> Result<&Engine, ApiError> {
        self.engine
            .get()
            .map(|e| e.as_ref())
            .ok_or(ApiError::NotReady)
    }
}

fn status_of(e: &ApiError) -> StatusCode {
    match e {
        ApiError::Schema { .. } => StatusCode::BAD_REQUEST,
        ApiError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        ApiError::NotReady => StatusCode::SERVICE_UNAVAILABLE,
        ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn json(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn respond<T: Serialize>(result: Result<T, ApiError>) -> Response {
    match result {
        Ok(v) => json(StatusCode::OK, api::to_body(&v)),
        Err(e) => {
            if matches!(e, ApiError::Internal(_)) {
                log::error!("{e}");
            }
            json(status_of(&e), api::to_body(&api::ErrorBody::from(&e)))
        }
    }
}

async fn predict(State(s): State<AppState>, body: Bytes) -> Response {
    respond(
        s.engine()
            .and_then(|e| api::predict(e, &api::parse(&body)?)),
    )
}

async fn recommend(State(s): State<AppState>, body: Bytes) -> Response {
    respond(
        s.engine()
            .and_then(|e| api::recommend_one(e, &api::parse(&body)?)),
    )
}

async fn universities(
    State(s): State<AppState>,
    q: Result<Query<api::UniversityQuery>, QueryRejection>,
) -> Response {
    respond(s.engine().and_then(|e| {
        let Query(q) = q.map_err(|r| ApiError::Schema {
            field: "query".into(),
            message: r.body_text(),
        })?;
        api::universities(e, &q)
    }))
}

async fn model(State(s): State<AppState>) -> Response {
    respond(s.engine().map(api::model_info))
}

async fn schema() -> Response {
    json(StatusCode::OK, api::SCHEMA_DOCUMENT.as_bytes().to_vec())
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    ready: bool,
    service: &'static str,
    version: &'static str,
}

async fn healthz(State(s): State<AppState>) -> Response {
    respond(Ok::<_, ApiError>(Health {
        status: "ok",
        ready: s.is_ready(),
        service: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/predict", post(predict))
        .route("/api/v1/recommend", post(recommend))
        .route("/api/v1/universities", get(universities))
        .route("/api/v1/model", get(model))
        .route("/api/v1/schema", get(schema))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Serve until ctrl-c. The engine may be installed on `state` at any time.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
