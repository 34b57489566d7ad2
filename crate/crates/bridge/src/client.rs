//! Blocking sidecar client with bounded retries.

use std::time::{Duration, Instant};

use mattelab_core::RemoteError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;

use crate::protocol::{check_health, check_response, SidecarRequest, SidecarResponse, HEALTH_PATH};

/// Largest response body accepted (base-64 planes of large images).
const MAX_BODY_BYTES: u64 = 512 * 1024 * 1024;

/// Per-call timeout and retry budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientLimits {
    /// Budget for one attempt, connect to last body byte.
    pub timeout_ms: u64,
    /// Extra attempts after a transport failure.
    pub retries: u32,
}

impl Default for ClientLimits {
    fn default() -> Self {
        Self {
            timeout_ms: 30_000,
            retries: 1,
        }
    }
}

/// Resolves `path` below `endpoint`, treating the endpoint as a directory
/// (`http://host/models` + `v1/segment` → `http://host/models/v1/segment`).
pub fn endpoint_url(endpoint: &Url, path: &str) -> Result<Url, RemoteError> {
    let mut base = endpoint.clone();
    if !base.path().ends_with('/') {
        let p = format!("{}/", base.path());
        base.set_path(&p);
    }
    base.join(path)
        .map_err(|e| RemoteError::Transport(format!("cannot form URL from {endpoint}: {e}")))
}

fn agent(limits: &ClientLimits) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(limits.timeout_ms)))
        .http_status_as_error(false)
        .max_idle_connections(0)
        .build()
        .into()
}

/// One attempt: returns the parsed JSON body of a 2xx answer.
fn attempt(agent: &ureq::Agent, url: &Url, body: Option<&str>) -> Result<Value, RemoteError> {
    let transport = |e: ureq::Error| RemoteError::Transport(format!("{url}: {e}"));
    let mut response = match body {
        Some(b) => agent
            .post(url.as_str())
            .header("content-type", "application/json")
            .send(b)
            .map_err(transport)?,
        None => agent.get(url.as_str()).call().map_err(transport)?,
    };
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .with_config()
        .limit(MAX_BODY_BYTES)
        .read_to_string()
        .map_err(transport)?;
    match status {
        200..=299 => {
            serde_json::from_str(&text).map_err(|e| RemoteError::protocol("$", format!("body is not JSON: {e}")))
        }
        500..=599 => Err(RemoteError::Transport(format!("{url}: server error {status}: {text}"))),
        _ => Err(RemoteError::Rejected { status, body: text }),
    }
}

/// Runs `once` up to `retries + 1` times, retrying transport failures only.
fn with_retries<V>(limits: &ClientLimits, mut once: impl FnMut() -> Result<V, RemoteError>) -> Result<V, RemoteError> {
    let mut attempts_left = limits.retries + 1;
    loop {
        attempts_left -= 1;
        match once() {
            Err(e) if e.is_transport() && attempts_left > 0 => continue,
            other => return other,
        }
    }
}

/// Sends `req` to the sidecar at `endpoint` and validates the answer.
///
/// Only transport failures (connection errors, timeouts, 5xx) are retried;
/// protocol violations and 4xx rejections are returned immediately.
pub fn remote_invoke(
    endpoint: &Url,
    req: &SidecarRequest,
    limits: &ClientLimits,
) -> Result<SidecarResponse, RemoteError> {
    req.validate().map_err(RemoteError::InvalidRequest)?;
    let url = endpoint_url(endpoint, req.kind().path())?;
    let body = req.to_body().to_string();
    let agent = agent(limits);
    let dims = req.image().dims();
    with_retries(limits, || {
        let start = Instant::now();
        let json = attempt(&agent, &url, Some(&body))?;
        let (payload, model_id) = check_response(req.kind(), dims, &json)?;
        Ok(SidecarResponse {
            payload,
            model_id,
            latency_ms: start.elapsed().as_millis() as u64,
        })
    })
}

/// Probes `GET /v1/health`, returning the advertised model id.
pub fn health(endpoint: &Url, limits: &ClientLimits) -> Result<String, RemoteError> {
    let url = endpoint_url(endpoint, HEALTH_PATH)?;
    let agent = agent(limits);
    with_retries(limits, || check_health(&attempt(&agent, &url, None)?))
}
