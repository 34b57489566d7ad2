//! Service configuration: a TOML file plus environment overrides for the
//! sidecar endpoints.

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use mattelab_bridge::ClientLimits;
use mattelab_core::matting::MattingBackendRef;
use mattelab_core::perception::{DetectorRef, SegmenterRef, TransparencyVocabulary};
use mattelab_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use url::Url;

/// Environment variables that point a backend at a sidecar.
pub const SEGMENT_URL_ENV: &str = "MATTELAB_SEGMENT_URL";
pub const DETECT_URL_ENV: &str = "MATTELAB_DETECT_URL";
pub const MATTE_URL_ENV: &str = "MATTELAB_MATTE_URL";

/// Background of exported composites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeBackground {
    /// Gray checkerboard with the given cell size in pixels.
    Checkerboard { cell: usize },
    /// Flat color, channels in `[0, 1]`.
    Flat { color: [f64; 3] },
}

impl Default for CompositeBackground {
    fn default() -> Self {
        CompositeBackground::Checkerboard { cell: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    /// Idle time after which a session is dropped.
    pub ttl_secs: u64,
    /// Bounded undo depth.
    pub undo_depth: usize,
    /// When set, artifacts are written under `<dir>/<session id>/` after every change.
    pub snapshot_dir: Option<PathBuf>,
    pub composite_background: CompositeBackground,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            ttl_secs: 3600,
            undo_depth: 32,
            snapshot_dir: None,
            composite_background: CompositeBackground::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    pub bind: String,
    /// Optional vocabulary file (one term per line) replacing `pipeline.vocabulary`.
    pub vocabulary_file: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub client: ClientLimits,
    pub sessions: SessionSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            bind: "127.0.0.1".into(),
            vocabulary_file: None,
            pipeline: PipelineConfig::default(),
            client: ClientLimits::default(),
            sessions: SessionSettings::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: ServiceConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any), resolves the vocabulary file relative to it, and
    /// applies environment overrides.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                let mut cfg = Self::from_toml(&text)?;
                if let (Some(v), Some(dir)) = (&cfg.vocabulary_file, p.parent()) {
                    cfg.vocabulary_file = Some(dir.join(v));
                }
                cfg
            }
            None => Self::default(),
        };
        if let Some(v) = &cfg.vocabulary_file {
            cfg.pipeline.vocabulary =
                TransparencyVocabulary::load(v).with_context(|| format!("vocabulary {}", v.display()))?;
        }
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Endpoint overrides; `lookup` abstracts the environment for testing.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        let url = |key: &str| -> anyhow::Result<Option<Url>> {
            match lookup(key).filter(|v| !v.trim().is_empty()) {
                Some(v) => Ok(Some(
                    Url::parse(v.trim()).with_context(|| format!("{key}={v} is not a URL"))?,
                )),
                None => Ok(None),
            }
        };
        if let Some(endpoint) = url(SEGMENT_URL_ENV)? {
            self.pipeline.segmenter = SegmenterRef::Remote { endpoint };
        }
        if let Some(endpoint) = url(DETECT_URL_ENV)? {
            self.pipeline.detector = DetectorRef::Remote { endpoint };
        }
        if let Some(endpoint) = url(MATTE_URL_ENV)? {
            self.pipeline.matting = MattingBackendRef::Remote { endpoint };
        }
        Ok(())
    }
}
