//! REST API over [`SessionStore`].
//!
//! | Method | Path | Body | Response |
//! |---|---|---|---|
//! | POST | `/api/sessions` | `{"image_b64"}` | 201, session state |
//! | GET | `/api/sessions/{id}/state` | | session state |
//! | POST | `/api/sessions/{id}/guidance` | guidance object | session state |
//! | POST | `/api/sessions/{id}/params` | `{"kernel_size","iterations"}` | session state |
//! | POST | `/api/sessions/{id}/transparency` | `{"mode"}` | session state |
//! | POST | `/api/sessions/{id}/undo` | | session state |
//! | GET | `/api/sessions/{id}/artifacts/{name}.png` | | PNG |
//! | GET | `/api/health` | | `{"status":"ok"}` |
//!
//! Errors are `{"error": message, "stage": stage-or-null}`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use mattelab_core::{MorphParams, TransparencyMode};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::config::CompositeBackground;
use crate::error::ServiceError;
use crate::guidance::GuidanceDto;
use crate::session::{ArtifactName, SessionStore, SessionView};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

type Shared = Arc<SessionStore>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    image_b64: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsBody {
    kernel_size: u32,
    iterations: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransparencyBody {
    mode: TransparencyMode,
}

/// Composite background override: `?background=checkerboard&cell=16` or
/// `?background=flat&color=ffffff`.
#[derive(Deserialize, Default)]
struct ArtifactQuery {
    background: Option<String>,
    cell: Option<usize>,
    color: Option<String>,
}

impl ArtifactQuery {
    fn resolve(&self, default: CompositeBackground) -> Result<CompositeBackground, ServiceError> {
        match self.background.as_deref() {
            None => Ok(default),
            Some("checkerboard") => Ok(CompositeBackground::Checkerboard {
                cell: self.cell.unwrap_or(8).max(1),
            }),
            Some("flat") => {
                let hex = self.color.as_deref().unwrap_or("ffffff");
                Ok(CompositeBackground::Flat { color: parse_hex(hex)? })
            }
            Some(other) => Err(ServiceError::Validation(format!("unknown background `{other}`"))),
        }
    }
}

fn parse_hex(hex: &str) -> Result<[f64; 3], ServiceError> {
    let hex = hex.trim_start_matches('#');
    let bad = || ServiceError::Validation(format!("color `{hex}` is not rrggbb hex"));
    if hex.len() != 6 || !hex.is_ascii() {
        return Err(bad());
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let byte = u8::from_str_radix(&hex[2 * c..2 * c + 2], 16).map_err(|_| bad())?;
        *o = f64::from(byte) / 255.0;
    }
    Ok(out)
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

/// Runs a blocking session operation off the async executor.
async fn blocking<R: Send + 'static>(
    f: impl FnOnce() -> Result<R, ServiceError> + Send + 'static,
) -> Result<R, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn create(State(store): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<SessionView>), ServiceError> {
    let req: CreateBody = parse_json(&body)?;
    let bytes = STANDARD
        .decode(req.image_b64.trim())
        .map_err(|e| ServiceError::BadRequest(format!("image_b64: {e}")))?;
    let view = blocking(move || store.create(&bytes)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn state(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    store.with(&id, |s, engine| Ok(s.view(engine))).map(Json)
}

async fn guidance(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ServiceError> {
    let dto: GuidanceDto = parse_json(&body)?;
    let g = dto.to_guidance()?;
    blocking(move || store.mutate(&id, |s, engine| s.apply_guidance(engine, g)))
        .await
        .map(Json)
}

async fn params(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ServiceError> {
    let req: ParamsBody = parse_json(&body)?;
    let p = MorphParams::new(req.kernel_size, req.iterations).map_err(|e| ServiceError::Validation(e.to_string()))?;
    blocking(move || store.mutate(&id, |s, engine| s.set_params(engine, p)))
        .await
        .map(Json)
}

async fn transparency(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ServiceError> {
    let req: TransparencyBody = parse_json(&body)?;
    blocking(move || store.mutate(&id, |s, engine| s.set_transparency(engine, req.mode)))
        .await
        .map(Json)
}

async fn undo(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    blocking(move || store.mutate(&id, |s, _| s.undo())).await.map(Json)
}

async fn artifact(
    State(store): State<Shared>,
    Path((id, file)): Path<(String, String)>,
    Query(q): Query<ArtifactQuery>,
) -> Result<Response, ServiceError> {
    let which = file
        .strip_suffix(".png")
        .and_then(ArtifactName::parse)
        .ok_or_else(|| ServiceError::NotFound(format!("no artifact `{file}`")))?;
    let background = q.resolve(store.engine().settings.composite_background)?;
    let png = blocking(move || store.with(&id, |s, _| s.export(which, background))).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// The application router.
pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}/state", get(state))
        .route("/api/sessions/{id}/guidance", post(guidance))
        .route("/api/sessions/{id}/params", post(params))
        .route("/api/sessions/{id}/transparency", post(transparency))
        .route("/api/sessions/{id}/undo", post(undo))
        .route("/api/sessions/{id}/artifacts/{file}", get(artifact))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Periodically drops idle sessions until the store is dropped elsewhere.
pub fn spawn_sweeper(store: Shared, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let removed = store.sweep(Instant::now());
            if removed > 0 {
                tracing::info!(removed, "expired idle sessions");
            }
        }
    })
}

/// Binds and serves until Ctrl-C.
pub async fn serve(store: SessionStore, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let store = Arc::new(store);
    let sweeper = spawn_sweeper(store.clone(), Duration::from_secs(60));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    sweeper.abort();
    Ok(())
}
