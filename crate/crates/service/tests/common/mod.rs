#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use mattelab_core::codec::encode_image;
use mattelab_core::raster::RasterImage;
use mattelab_core::Image;
use mattelab_service::api::router;
use mattelab_service::{Engine, ServiceConfig, SessionStore};
use serde_json::Value;
use tokio::sync::oneshot;

pub const W: usize = 160;
pub const H: usize = 120;
pub const OBJECT: [f64; 3] = [0.9, 0.3, 0.2];
pub const BACKGROUND: [f64; 3] = [0.1, 0.2, 0.6];

/// Left object occupies x in 20..60, right object x in 100..140, both y in 30..90.
pub fn in_left(x: usize, y: usize) -> bool {
    (20..60).contains(&x) && (30..90).contains(&y)
}

pub fn in_right(x: usize, y: usize) -> bool {
    (100..140).contains(&x) && (30..90).contains(&y)
}

/// Two flat rectangles on a flat background.
pub fn two_objects() -> Image {
    RasterImage::from_fn(W, H, |x, y| {
        if in_left(x, y) || in_right(x, y) {
            OBJECT
        } else {
            BACKGROUND
        }
    })
    .unwrap()
}

pub fn two_objects_png() -> Vec<u8> {
    encode_image(&two_objects())
}

pub fn engine(cfg: &ServiceConfig) -> Engine {
    Engine::from_config(cfg).unwrap()
}

/// Defaults, except a structuring element small enough for the 40-px objects.
pub fn test_config() -> ServiceConfig {
    let mut cfg = ServiceConfig::default();
    cfg.pipeline.morph = mattelab_core::MorphParams::new(5, 2).unwrap();
    cfg
}

pub fn store() -> Arc<SessionStore> {
    Arc::new(SessionStore::new(engine(&test_config())))
}

/// The router served on an ephemeral port from a private runtime.
pub struct TestServer {
    pub addr: SocketAddr,
    pub store: Arc<SessionStore>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(store: Arc<SessionStore>) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (shutdown, stop) = oneshot::channel::<()>();
        let app = router(store.clone());
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            addr,
            store,
            shutdown: Some(shutdown),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    fn agent() -> ureq::Agent {
        ureq::Agent::config_builder().http_status_as_error(false).build().into()
    }

    pub fn get(&self, path: &str) -> (u16, Vec<u8>) {
        let mut resp = Self::agent().get(&self.url(path)).call().unwrap();
        let status = resp.status().as_u16();
        (
            status,
            resp.body_mut().with_config().limit(64 << 20).read_to_vec().unwrap(),
        )
    }

    pub fn get_json(&self, path: &str) -> (u16, Value) {
        let (s, body) = self.get(path);
        (s, serde_json::from_slice(&body).unwrap())
    }

    pub fn post(&self, path: &str, body: &str) -> (u16, Value) {
        let mut resp = Self::agent()
            .post(&self.url(path))
            .header("content-type", "application/json")
            .send(body)
            .unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    /// Creates a session on the two-object image and returns its id.
    pub fn create(&self) -> String {
        let body = serde_json::json!({ "image_b64": STANDARD.encode(two_objects_png()) }).to_string();
        let (status, v) = self.post("/api/sessions", &body);
        assert_eq!(status, 201, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    pub fn artifact(&self, id: &str, name: &str) -> Vec<u8> {
        let (status, bytes) = self.get(&format!("/api/sessions/{id}/artifacts/{name}.png"));
        assert_eq!(status, 200, "{name}: {}", String::from_utf8_lossy(&bytes));
        bytes
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Box around the left object with a margin of background.
pub const LEFT_BOX: &str = r#"{"kind":"box","box":[14,24,66,96]}"#;

impl TestServer {
    pub fn artifact_query(&self, id: &str, name: &str, query: &str) -> Vec<u8> {
        let (status, bytes) = self.get(&format!("/api/sessions/{id}/artifacts/{name}.png{query}"));
        assert_eq!(status, 200, "{name}: {}", String::from_utf8_lossy(&bytes));
        bytes
    }
}
