//! HTTP sessions for interactive segmentation.
//!
//! Routes (JSON bodies):
//!
//! * `GET /images`, `POST /images`
//! * `POST /sessions`, `GET /sessions`, `GET /sessions/{id}`
//! * `POST /sessions/{id}/strokes`
//! * `POST /sessions/{id}/robot-replay`
//!
//! Masks travel as [`rle::RleMask`].

pub mod error;
pub mod rle;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::services::ServeDir;

pub use error::ServiceError;
pub use session::{CreateSession, ReplayRequest, SessionView, StrokeInput, StrokeResponse};
pub use store::{ImageInfo, Store, UploadRequest};

use robotseg_core::robot::InteractionTrace;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ServiceConfig {
    pub dataset: Option<PathBuf>,
    pub port: u16,
    pub state_dir: Option<PathBuf>,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

pub const DEFAULT_PORT: u16 = 8080;

impl ServiceConfig {
    /// Reads `ROBOTSEG_DATASET`, `ROBOTSEG_PORT`, `ROBOTSEG_STATE_DIR` and
    /// `ROBOTSEG_STATIC_DIR`.
    pub fn from_env() -> Result<Self, ServiceError> {
        let path = |k: &str| std::env::var_os(k).map(PathBuf::from);
        let port = match std::env::var("ROBOTSEG_PORT") {
            Ok(p) => p
                .parse()
                .map_err(|_| ServiceError::Invalid(format!("ROBOTSEG_PORT={p} is not a port")))?,
            Err(_) => DEFAULT_PORT,
        };
        Ok(Self {
            dataset: path("ROBOTSEG_DATASET"),
            port,
            state_dir: path("ROBOTSEG_STATE_DIR"),
            static_dir: path("ROBOTSEG_STATIC_DIR"),
        })
    }
}

type Shared = State<Arc<Store>>;
type Reply<T> = Result<Json<T>, ServiceError>;

async fn list_images(State(s): Shared) -> Json<Vec<ImageInfo>> {
    Json(s.list_images())
}

async fn upload_image(
    State(s): Shared,
    Json(req): Json<UploadRequest>,
) -> Result<(StatusCode, Json<ImageInfo>), ServiceError> {
    let store = s.clone();
    let info = tokio::task::spawn_blocking(move || store.upload_image(&req))
        .await
        .map_err(|e| ServiceError::Storage(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn create_session(
    State(s): Shared,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionView>), ServiceError> {
    Ok((StatusCode::CREATED, Json(s.create_session(req).await?)))
}

async fn list_sessions(State(s): Shared) -> Json<Vec<String>> {
    Json(s.session_ids())
}

async fn get_session(State(s): Shared, Path(id): Path<String>) -> Reply<SessionView> {
    Ok(Json(s.get_session(&id).await?))
}

async fn post_stroke(
    State(s): Shared,
    Path(id): Path<String>,
    Json(stroke): Json<StrokeInput>,
) -> Reply<StrokeResponse> {
    Ok(Json(s.post_stroke(&id, stroke).await?))
}

async fn robot_replay(
    State(s): Shared,
    Path(id): Path<String>,
    Json(req): Json<ReplayRequest>,
) -> Reply<InteractionTrace> {
    Ok(Json(s.robot_replay(&id, req).await?))
}

pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/images", get(list_images).post(upload_image))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/strokes", post(post_stroke))
        .route("/sessions/{id}/robot-replay", post(robot_replay))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let cfg = config.clone();
    let store =
        tokio::task::spawn_blocking(move || Store::open(cfg.dataset.as_deref(), cfg.state_dir))
            .await??;
    tracing::info!(
        images = store.list_images().len(),
        sessions = store.session_ids().len(),
        "store ready"
    );
    let app = router(Arc::new(store), config.static_dir);
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, app).await?;
    Ok(())
}
