//! In-process mock sidecar speaking protocol v1, with fault injection.
//!
//! The server runs on its own thread and runtime, so blocking clients can call
//! it from ordinary tests. Dropping the handle shuts it down.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use mattelab_core::codec::{encode_alpha, encode_mask};
use mattelab_core::raster::AlphaMatte;
use mattelab_core::{BinaryMask, Detection, Label, RemoteError};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use url::Url;

use crate::protocol::{parse_request, ParsedRequest, RequestKind};

/// How `/v1/segment` builds its mask.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentFixture {
    /// Every pixel set (or unset), whatever the prompt.
    Constant(bool),
    /// Pixels whose luma is within `tolerance` of a positive point's luma; the
    /// union of box interiors when there are no positive points.
    SeedThreshold { tolerance: f64 },
}

/// A deliberate protocol defect in every successful answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Defect {
    /// Planes one column wider than the request image; detection boxes past its edge.
    WrongDimensions,
    /// The primary payload field (`mask_b64`, `detections`, `alpha_b64`) is omitted.
    MissingField,
    /// The body is not JSON at all.
    NotJson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub model_id: String,
    pub segment: SegmentFixture,
    /// Returned verbatim by `/v1/detect`.
    pub detections: Vec<Detection>,
    /// Alpha written on the unknown band by `/v1/matte` (known pixels follow the trimap).
    pub unknown_alpha: f64,
    /// The first this-many requests (any endpoint) answer 503.
    pub transient_failures: usize,
    pub defect: Option<Defect>,
    /// Sleep before answering each request.
    pub delay: Duration,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            model_id: "mock-1".into(),
            segment: SegmentFixture::SeedThreshold { tolerance: 0.1 },
            detections: Vec::new(),
            unknown_alpha: 0.5,
            transient_failures: 0,
            defect: None,
            delay: Duration::ZERO,
        }
    }
}

#[derive(Default)]
struct Counters {
    segment: AtomicUsize,
    detect: AtomicUsize,
    matte: AtomicUsize,
    health: AtomicUsize,
}

struct MockState {
    config: MockConfig,
    counters: Counters,
    served: AtomicUsize,
}

impl MockState {
    fn counter(&self, endpoint: Endpoint) -> &AtomicUsize {
        match endpoint {
            Endpoint::Segment => &self.counters.segment,
            Endpoint::Detect => &self.counters.detect,
            Endpoint::Matte => &self.counters.matte,
            Endpoint::Health => &self.counters.health,
        }
    }
}

/// Mock routes, for call counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Segment,
    Detect,
    Matte,
    Health,
}

/// Handle to a running mock sidecar.
pub struct MockSidecar {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockSidecar {
    pub fn start(config: MockConfig) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            config,
            counters: Counters::default(),
            served: AtomicUsize::new(0),
        });
        let app = router(Arc::clone(&state));
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener registers with runtime");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("mock sidecar serves");
            });
        });
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base endpoint for clients, e.g. `http://127.0.0.1:PORT/`.
    pub fn url(&self) -> Url {
        Url::parse(&format!("http://{}/", self.addr)).expect("socket address forms a URL")
    }

    /// Requests received on one route, including injected failures.
    pub fn calls(&self, endpoint: Endpoint) -> usize {
        self.state.counter(endpoint).load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.state.served.load(Ordering::SeqCst)
    }
}

impl Drop for MockSidecar {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn router(state: Arc<MockState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/segment", post(segment))
        .route("/v1/detect", post(detect))
        .route("/v1/matte", post(matte))
        .with_state(state)
}

/// Counts the call, applies the delay, and injects transient failures.
async fn admit(state: &MockState, endpoint: Endpoint) -> Option<Response> {
    state.counter(endpoint).fetch_add(1, Ordering::SeqCst);
    let n = state.served.fetch_add(1, Ordering::SeqCst);
    if !state.config.delay.is_zero() {
        tokio::time::sleep(state.config.delay).await;
    }
    (n < state.config.transient_failures).then(|| {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({"error": "injected transient failure"})),
        )
            .into_response()
    })
}

fn bad_request(e: RemoteError) -> Response {
    let body = match &e {
        RemoteError::ProtocolViolation { field, detail } => json!({"error": detail, "field": field}),
        other => json!({"error": other.to_string()}),
    };
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

fn parse(kind: RequestKind, body: &Bytes) -> Result<ParsedRequest, Box<Response>> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| Box::new(bad_request(RemoteError::protocol("$", e.to_string()))))?;
    parse_request(kind, &value).map_err(|e| Box::new(bad_request(e)))
}

fn answer(state: &MockState, key: &str, payload: Value) -> Response {
    match state.config.defect {
        Some(Defect::NotJson) => (StatusCode::OK, "this is not json").into_response(),
        Some(Defect::MissingField) => Json(json!({"model_id": state.config.model_id})).into_response(),
        _ => {
            let mut body = json!({"model_id": state.config.model_id});
            body[key] = payload;
            Json(body).into_response()
        }
    }
}

fn widened(state: &MockState, w: usize) -> usize {
    if state.config.defect == Some(Defect::WrongDimensions) {
        w + 1
    } else {
        w
    }
}

async fn health(State(state): State<Arc<MockState>>) -> Response {
    if let Some(r) = admit(&state, Endpoint::Health).await {
        return r;
    }
    Json(json!({"status": "ok", "model_id": state.config.model_id})).into_response()
}

fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

async fn segment(State(state): State<Arc<MockState>>, body: Bytes) -> Response {
    if let Some(r) = admit(&state, Endpoint::Segment).await {
        return r;
    }
    let ParsedRequest::Segment { image, points, boxes } = (match parse(RequestKind::Segment, &body) {
        Ok(p) => p,
        Err(r) => return *r,
    }) else {
        unreachable!("segment route parses segment requests")
    };
    let (w, h) = image.dims();
    let seeds: Vec<f64> = points
        .iter()
        .filter(|p| p.polarity.is_positive() && (p.x as usize) < w && (p.y as usize) < h)
        .map(|p| luma(image.get(p.x as usize, p.y as usize)))
        .collect();
    let out_w = widened(&state, w);
    let mask = BinaryMask::from_fn(out_w, h, |x, y| match state.config.segment {
        SegmentFixture::Constant(v) => v,
        SegmentFixture::SeedThreshold { tolerance } => {
            let xi = x.min(w - 1);
            if seeds.is_empty() {
                boxes.iter().any(|b| b.contains(x, y))
            } else {
                let l = luma(image.get(xi, y));
                seeds.iter().any(|s| (s - l).abs() <= tolerance)
            }
        }
    })
    .expect("nonzero dimensions");
    answer(&state, "mask_b64", json!(STANDARD.encode(encode_mask(&mask))))
}

async fn detect(State(state): State<Arc<MockState>>, body: Bytes) -> Response {
    if let Some(r) = admit(&state, Endpoint::Detect).await {
        return r;
    }
    let ParsedRequest::Detect { image, .. } = (match parse(RequestKind::Detect, &body) {
        Ok(p) => p,
        Err(r) => return *r,
    }) else {
        unreachable!("detect route parses detect requests")
    };
    let mut dets: Vec<Value> = state
        .config
        .detections
        .iter()
        .map(|d| json!({"box": d.bbox.to_array(), "label": d.label, "score": d.score}))
        .collect();
    if state.config.defect == Some(Defect::WrongDimensions) {
        let (w, h) = image.dims();
        dets.push(json!({"box": [0, 0, w + 1, h], "label": "overflow", "score": 0.99}));
    }
    answer(&state, "detections", Value::Array(dets))
}

async fn matte(State(state): State<Arc<MockState>>, body: Bytes) -> Response {
    if let Some(r) = admit(&state, Endpoint::Matte).await {
        return r;
    }
    let ParsedRequest::Matte { trimap, .. } = (match parse(RequestKind::Matte, &body) {
        Ok(p) => p,
        Err(r) => return *r,
    }) else {
        unreachable!("matte route parses matte requests")
    };
    let (w, h) = trimap.dims();
    let fill = state.config.unknown_alpha.clamp(0.0, 1.0);
    let alpha = AlphaMatte::from_fn(widened(&state, w), h, |x, y| match trimap.get(x.min(w - 1), y) {
        Label::Foreground => 1.0,
        Label::Background => 0.0,
        Label::Unknown => fill,
    })
    .expect("values in range");
    answer(&state, "alpha_b64", json!(STANDARD.encode(encode_alpha(&alpha))))
}
