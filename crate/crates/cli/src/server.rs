//! HTTP service over immutable propensity tables loaded at startup.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rankprop::scenario::{forecast, ScenarioRequest};
use rankprop::PropensityTable;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::artifact::{find_artifacts, Artifact};
use crate::error::{CliResult, Failure};

#[derive(Debug)]
pub struct Loaded {
    pub artifact: Artifact,
    pub table: PropensityTable,
}

/// Tables keyed by interface. Never mutated after startup.
#[derive(Debug, Default)]
pub struct AppState {
    pub tables: BTreeMap<String, Loaded>,
}

impl AppState {
    pub fn from_artifacts(artifacts: Vec<Artifact>) -> CliResult<Self> {
        let mut tables = BTreeMap::new();
        for artifact in artifacts {
            let table = artifact.table()?;
            let key = artifact.interface.to_string();
            if tables.insert(key.clone(), Loaded { artifact, table }).is_some() {
                return Err(Failure::new("artifact", format!("two artifacts for interface {key}")));
            }
        }
        if tables.is_empty() {
            return Err(Failure::new("no_artifacts", "no propensity artifacts to serve"));
        }
        Ok(Self { tables })
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let artifacts = find_artifacts(dir)?.iter().map(|p| Artifact::read(p)).collect::<CliResult<Vec<_>>>()?;
        if artifacts.is_empty() {
            return Err(Failure::new("no_artifacts", format!("no propensity_*.json artifacts in {}", dir.display())));
        }
        Self::from_artifacts(artifacts)
    }
}

struct ApiError {
    status: StatusCode,
    class: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, class: &'static str, message: impl Into<String>) -> Self {
        Self { status, class, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "class": self.class, "message": self.message } }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", r.body_text())
    }
}

type Shared = Arc<AppState>;

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "interfaces": state.tables.keys().collect::<Vec<_>>() }))
}

#[derive(Deserialize)]
struct PropensityQuery {
    interface: Option<String>,
}

async fn propensities(
    State(state): State<Shared>,
    query: Result<Query<PropensityQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query?;
    match q.interface {
        None => Ok(Json(json!({ "interfaces": state.tables.keys().collect::<Vec<_>>() })).into_response()),
        Some(name) => match state.tables.get(&name) {
            Some(loaded) => Ok(Json(&loaded.artifact).into_response()),
            None => {
                Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_interface", format!("no table for interface {name}")))
            }
        },
    }
}

async fn scenario(
    State(state): State<Shared>,
    body: Result<Json<ScenarioRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let loaded = state.tables.get(req.interface.as_str()).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_interface", format!("no table for interface {}", req.interface))
    })?;
    match forecast(&req, &loaded.table) {
        Ok(resp) => Ok(Json(resp).into_response()),
        Err(e) => {
            let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::BAD_REQUEST);
            Err(ApiError::new(status, e.class(), e.to_string()))
        }
    }
}

/// Permissive CORS when `origins` is empty.
pub fn cors(origins: &[String]) -> CliResult<CorsLayer> {
    if origins.is_empty() {
        return Ok(CorsLayer::permissive());
    }
    let values = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| Failure::new("usage", format!("invalid CORS origin {o}"))))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(CorsLayer::new()
        .allow_origin(AllowOrigin::list(values))
        .allow_methods(tower_http::cors::Any)
        .allow_headers(tower_http::cors::Any))
}

pub fn router(state: AppState, cors: CorsLayer) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/propensities", get(propensities))
        .route("/v1/scenario/forecast", post(scenario))
        .with_state(Arc::new(state))
        .layer(cors)
}

pub fn serve(state: AppState, port: u16, cors: CorsLayer) -> CliResult<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let addr = SocketAddr::from(([0, 0, 0, 0], port));
        let listener =
            tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::new("io", format!("bind {addr}: {e}")))?;
        tracing::info!(%addr, interfaces = state.tables.len(), "serving");
        axum::serve(listener, router(state, cors))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::new("io", e.to_string()))
    })
}
