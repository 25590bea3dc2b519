//! HTTP query service over a loaded checkpoint.
//!
//! The checkpoint is loaded once, in the background, after the listener is
//! bound; until then `/api/v1/health` reports `loading` and model-dependent
//! routes answer 503. The loaded [`Engine`] is immutable and shared by all
//! requests. Route and body shapes are documented in [`revdict_core::api`].

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use revdict_core::api::{
    EmbeddingPaths, Engine, ErrorBody, Health, HealthStatus, ModelInfo, QueryRequest,
};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("loading the model failed: {0}")]
    Load(#[from] revdict_core::Error),
    #[error("server error: {0}")]
    Serve(std::io::Error),
    #[error("a model is already loaded")]
    AlreadyLoaded,
}

/// Shared handle to the (eventually) loaded engine.
#[derive(Debug, Clone, Default)]
pub struct ServiceState {
    engine: Arc<OnceLock<Arc<Engine>>>,
}

impl ServiceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn install(&self, engine: Engine) -> Result<(), ServiceError> {
        self.engine
            .set(Arc::new(engine))
            .map_err(|_| ServiceError::AlreadyLoaded)
    }

    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.engine.get().cloned()
    }

    pub fn is_loaded(&self) -> bool {
        self.engine.get().is_some()
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

fn loading() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "model is loading")
}

async fn health(State(state): State<ServiceState>) -> Json<Health> {
    let status = if state.is_loaded() {
        HealthStatus::Ok
    } else {
        HealthStatus::Loading
    };
    Json(Health { status })
}

async fn model_info(State(state): State<ServiceState>) -> Response {
    match state.engine() {
        Some(engine) => Json(engine.info().clone()).into_response(),
        None => loading(),
    }
}

async fn query(
    State(state): State<ServiceState>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(rejection) => return error(StatusCode::BAD_REQUEST, rejection.body_text()),
    };
    let Some(engine) = state.engine() else {
        return loading();
    };
    // Ranking a large vocabulary is CPU-bound; keep it off the reactor.
    match tokio::task::spawn_blocking(move || engine.query(&req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(bad)) => error(StatusCode::BAD_REQUEST, bad.0),
        Err(join) => {
            tracing::error!(%join, "query task failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
        }
    }
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "not found")
}

/// All routes. With `static_dir`, unmatched paths are served from it.
pub fn router(state: ServiceState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/model", get(model_info))
        .route("/api/v1/query", post(query))
        .with_state(state);
    match static_dir {
        Some(dir) => {
            api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true))
        }
        None => api.fallback(not_found),
    }
}

/// Loads a checkpoint on the blocking pool and installs it.
pub async fn load_into(
    state: &ServiceState,
    checkpoint: PathBuf,
    embeddings: Option<EmbeddingPaths>,
) -> Result<ModelInfo, ServiceError> {
    let engine =
        tokio::task::spawn_blocking(move || Engine::load(&checkpoint, embeddings.as_ref()))
            .await
            .expect("loader task panicked")?;
    let info = engine.info().clone();
    state.install(engine)?;
    Ok(info)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub checkpoint: PathBuf,
    pub embeddings: Option<EmbeddingPaths>,
    pub static_dir: Option<PathBuf>,
}

/// Serves on an already-bound listener until `shutdown` resolves. Returns
/// an error if the checkpoint fails to load.
pub async fn serve_on(
    listener: TcpListener,
    cfg: ServeConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let state = ServiceState::new();
    let app = router(state.clone(), cfg.static_dir.clone());
    let (fail_tx, fail_rx) = tokio::sync::oneshot::channel::<ServiceError>();

    let loader_state = state.clone();
    tokio::spawn(async move {
        match load_into(&loader_state, cfg.checkpoint, cfg.embeddings).await {
            Ok(info) => {
                tracing::info!(checkpoint = %info.checkpoint_id, mode = info.input_mode.name(), "model loaded")
            }
            Err(e) => {
                let _ = fail_tx.send(e);
            }
        }
    });

    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<Option<ServiceError>>();
    tokio::spawn(async move {
        let reason = tokio::select! {
            _ = shutdown => None,
            Ok(e) = fail_rx => Some(e),
        };
        let _ = stop_tx.send(reason);
    });
    let (reason_tx, mut reason_rx) = tokio::sync::oneshot::channel::<ServiceError>();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            if let Ok(Some(e)) = stop_rx.await {
                let _ = reason_tx.send(e);
            }
        })
        .await
        .map_err(ServiceError::Serve)?;
    match reason_rx.try_recv() {
        Ok(e) => Err(e),
        Err(_) => Ok(()),
    }
}

/// Binds `cfg.addr` and serves until `shutdown` resolves.
pub async fn serve(
    cfg: ServeConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let listener = TcpListener::bind(cfg.addr)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: cfg.addr,
            source,
        })?;
    tracing::info!(addr = %listener.local_addr().map_err(ServiceError::Serve)?, "listening");
    serve_on(listener, cfg, shutdown).await
}
