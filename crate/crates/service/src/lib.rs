//! Local JSON-over-HTTP service exposing MSG extraction and generation.
//!
//! Routes:
//!
//! * `GET  /api/health`   → `{"status":"ok","version":...}`
//! * `GET  /api/models`   → `[{"id","kind","description"}]`
//! * `POST /api/extract`  → MSG document for `{points, params?, seed?}`
//! * `POST /api/generate` → `{points, per_point_vertex}` for `{graph, model, seed?}`
//!
//! Errors are `{"error": <message>, "details": <value>}`. State is built once
//! at startup and never mutated, so requests are independent and identical
//! bodies give identical responses.

mod api;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::http::HeaderValue;
use axum::Router;
use mspcg_core::baselines::{Baseline, Generator, DEFAULT_KAPPA};
use mspcg_core::model::load_checkpoint;
use serde::Serialize;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use api::router;

pub const DEFAULT_PORT: u16 = 8787;

/// Origins allowed by default: the usual local dev-server ports.
pub const DEFAULT_CORS_ORIGINS: [&str; 4] = [
    "http://localhost:5173",
    "http://127.0.0.1:5173",
    "http://localhost:3000",
    "http://127.0.0.1:3000",
];

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid CORS origin {0:?}")]
    Origin(String),
    #[error("duplicate model id {0:?}")]
    DuplicateModel(String),
    #[error("loading checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: mspcg_core::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Checkpoint,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: ModelKind,
    pub description: String,
}

pub struct ModelEntry {
    pub info: ModelInfo,
    pub generator: Arc<dyn Generator>,
}

/// Models keyed by id, in listing order.
pub struct ServiceState {
    models: Vec<ModelEntry>,
}

impl ServiceState {
    /// The two baselines: `interp` and `gaussian` (κ = [`DEFAULT_KAPPA`]).
    pub fn with_baselines() -> Self {
        let baseline = |id: &str, description: String, g: Baseline| ModelEntry {
            info: ModelInfo {
                id: id.to_string(),
                kind: ModelKind::Baseline,
                description,
            },
            generator: Arc::new(g),
        };
        ServiceState {
            models: vec![
                baseline(
                    "interp",
                    "points spread evenly along MSG edges".into(),
                    Baseline::Interpolation,
                ),
                baseline(
                    "gaussian",
                    format!("isotropic normal around each vertex, std {DEFAULT_KAPPA}·SF"),
                    Baseline::Gaussian {
                        kappa: DEFAULT_KAPPA,
                    },
                ),
            ],
        }
    }

    pub fn add(&mut self, entry: ModelEntry) -> Result<(), ServiceError> {
        if self.get(&entry.info.id).is_some() {
            return Err(ServiceError::DuplicateModel(entry.info.id));
        }
        self.models.push(entry);
        Ok(())
    }

    /// Loads a checkpoint under `id`, or under the file stem when `id` is `None`.
    pub fn add_checkpoint(&mut self, path: &Path, id: Option<&str>) -> Result<(), ServiceError> {
        let ck = load_checkpoint(path).map_err(|source| ServiceError::Checkpoint {
            path: path.to_path_buf(),
            source,
        })?;
        let id = id
            .map(str::to_string)
            .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "checkpoint".into());
        let cfg = ck.weights.config();
        let description = format!(
            "trained generator, {} channels, {} parameters, {} epochs",
            cfg.channels,
            ck.weights.num_parameters(),
            ck.meta.epochs
        );
        self.add(ModelEntry {
            info: ModelInfo {
                id,
                kind: ModelKind::Checkpoint,
                description,
            },
            generator: Arc::new(ck.weights),
        })
    }

    pub fn get(&self, id: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.info.id == id)
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelInfo> {
        self.models.iter().map(|m| &m.info)
    }
}

pub fn cors_layer(origins: &[String]) -> Result<CorsLayer, ServiceError> {
    let values = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Origin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorsLayer::new()
        .allow_origin(AllowOrigin::list(values))
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]))
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub port: u16,
    /// Bind address; loopback unless overridden.
    pub host: [u8; 4],
    pub cors_origins: Vec<String>,
    pub checkpoints: Vec<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: DEFAULT_PORT,
            host: [127, 0, 0, 1],
            cors_origins: DEFAULT_CORS_ORIGINS.iter().map(|s| s.to_string()).collect(),
            checkpoints: Vec::new(),
        }
    }
}

/// Loads every configured checkpoint and builds the full application.
pub fn build_app(config: &ServiceConfig) -> Result<Router, ServiceError> {
    let mut state = ServiceState::with_baselines();
    for path in &config.checkpoints {
        state.add_checkpoint(path, None)?;
    }
    Ok(router(Arc::new(state)).layer(cors_layer(&config.cors_origins)?))
}

/// Serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let app = build_app(&config)?;
    let addr = SocketAddr::from((config.host, config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
