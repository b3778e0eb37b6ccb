use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mspcg_core::extract::{extract_msg, ExtractParams};
use mspcg_core::graph::{graph_from_value_unvalidated, graph_to_value, validate};
use mspcg_core::{PointCloud, Vec3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ServiceState;

/// Request bodies up to this size are accepted.
const BODY_LIMIT: usize = 64 << 20;

pub struct ApiError {
    status: StatusCode,
    message: String,
    details: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/models", get(models))
        .route("/api/extract", post(extract))
        .route("/api/generate", post(generate))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": mspcg_core::VERSION }))
}

async fn models(State(state): State<Arc<ServiceState>>) -> Json<Value> {
    Json(json!(state.models().collect::<Vec<_>>()))
}

async fn not_found(uri: axum::http::Uri) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        format!("no route for {}", uri.path()),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractRequest {
    points: Vec<[f64; 3]>,
    #[serde(default)]
    params: Option<ExtractParams>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn extract(body: Bytes) -> ApiResult<Json<Value>> {
    let req: ExtractRequest = parse_body(&body)?;
    let mut params = req.params.unwrap_or_default();
    if let Some(seed) = req.seed {
        params.seed = seed;
    }
    params
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let needed = params.min_points();
    if req.points.len() < needed {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!(
                "extraction needs at least {needed} points, got {}",
                req.points.len()
            ),
        )
        .with_details(json!({ "min_points": needed, "points": req.points.len() })));
    }
    let cloud = PointCloud::new(req.points.iter().map(|p| Vec3::from(*p)).collect());
    let graph = tokio::task::spawn_blocking(move || extract_msg(&cloud, &params))
        .await
        .map_err(ApiError::internal)?
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(graph_to_value(&graph)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    graph: Value,
    model: String,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct GenerateResponse {
    points: Vec<[f64; 3]>,
    per_point_vertex: Vec<u32>,
}

async fn generate(
    State(state): State<Arc<ServiceState>>,
    body: Bytes,
) -> ApiResult<Json<GenerateResponse>> {
    let req: GenerateRequest = parse_body(&body)?;
    let graph = graph_from_value_unvalidated(req.graph)
        .map_err(|e| ApiError::bad_request(format!("invalid graph: {e}")))?;
    let violations = validate(&graph);
    if !violations.is_empty() {
        return Err(ApiError::bad_request("invalid graph").with_details(json!(violations)));
    }
    let entry = state.get(&req.model).ok_or_else(|| {
        let known: Vec<_> = state.models().map(|m| m.id.clone()).collect();
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown model {:?}", req.model),
        )
        .with_details(json!({ "known": known }))
    })?;
    let generator = entry.generator.clone();
    let seed = req.seed.unwrap_or(0);
    let cloud = tokio::task::spawn_blocking(move || {
        let mut g = graph;
        g.vertices.sort_by_key(|v| v.id);
        g.edges.sort_unstable();
        generator.generate(&g, seed)
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let per_point_vertex = cloud
        .source_vertex
        .clone()
        .ok_or_else(|| ApiError::internal("generator produced no vertex labels"))?;
    Ok(Json(GenerateResponse {
        points: cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        per_point_vertex,
    }))
}
