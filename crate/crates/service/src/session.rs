//! Interactive sessions: guidance accumulation, recomputation, undo and export.
//!
//! Every mutation is computed on a copy of the session's artifacts and only
//! committed when the whole pipeline succeeded, so a failed request leaves the
//! session exactly as it was.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use mattelab_core::codec::{decode_image, encode_alpha, encode_cutout, encode_image, encode_mask, encode_trimap};
use mattelab_core::matting::MattingBackendRef;
use mattelab_core::perception::{resolve_text, segment_checked, DetectorRef, Guidance, Prompt, SegmenterRef};
use mattelab_core::pipeline::{decide, run_with_decision, Backends, PipelineConfig, Stage};
use mattelab_core::raster::{checkerboard, composite, RasterImage};
use mattelab_core::{
    Alpha, BinaryMask, DetectionSet, Image, MorphParams, TransparencyDecision, TransparencyMode, Trimap,
};
use serde::{Deserialize, Serialize};

use crate::config::{CompositeBackground, SessionSettings};
use crate::error::ServiceError;
use crate::guidance::GuidanceDto;

/// Exportable artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactName {
    Mask,
    Trimap,
    Alpha,
    Composite,
    ForegroundCutout,
}

impl ArtifactName {
    pub const ALL: [ArtifactName; 5] = [
        ArtifactName::Mask,
        ArtifactName::Trimap,
        ArtifactName::Alpha,
        ArtifactName::Composite,
        ArtifactName::ForegroundCutout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactName::Mask => "mask",
            ArtifactName::Trimap => "trimap",
            ArtifactName::Alpha => "alpha",
            ArtifactName::Composite => "composite",
            ArtifactName::ForegroundCutout => "foreground_cutout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

/// The pipeline configuration and backends sessions run against.
pub struct Engine {
    pub config: PipelineConfig,
    pub backends: Backends<f64>,
    pub settings: SessionSettings,
}

/// Everything an undo step restores.
#[derive(Debug, Clone, PartialEq)]
struct Artifacts {
    guidance: Vec<Guidance>,
    /// Accumulated segmenter prompt (points and scribbles add; boxes and text reset).
    prompt: Prompt,
    params: MorphParams,
    mode: TransparencyMode,
    mask: Option<BinaryMask>,
    decision: Option<TransparencyDecision>,
    trimap: Option<Trimap>,
    alpha: Option<Alpha>,
}

pub struct Session {
    id: String,
    image: Image,
    current: Artifacts,
    undo: VecDeque<Artifacts>,
    /// Detector output depends only on the image, so it is fetched once.
    detections: Option<DetectionSet>,
    version: u64,
    last_access: Instant,
}

/// Backend selection as reported in the session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendView {
    pub segmenter: SegmenterRef,
    pub detector: DetectorRef,
    pub matting: MattingBackendRef,
}

/// Public view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Increments on every committed mutation (including undo).
    pub version: u64,
    pub mode: TransparencyMode,
    pub params: MorphParams,
    pub guidance: Vec<GuidanceDto>,
    pub decision: Option<TransparencyDecision>,
    pub artifacts: Vec<ArtifactName>,
    pub undo_depth: usize,
    pub backends: BackendView,
}

impl Session {
    pub fn new(id: String, image: Image, params: MorphParams) -> Self {
        Self {
            id,
            image,
            current: Artifacts {
                guidance: Vec::new(),
                prompt: Prompt::default(),
                params,
                mode: TransparencyMode::Auto,
                mask: None,
                decision: None,
                trimap: None,
                alpha: None,
            },
            undo: VecDeque::new(),
            detections: None,
            version: 0,
            last_access: Instant::now(),
        }
    }

    /// Sets the transparency mode used once a mask exists.
    pub fn with_mode(mut self, mode: TransparencyMode) -> Self {
        self.current.mode = mode;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn mask(&self) -> Option<&BinaryMask> {
        self.current.mask.as_ref()
    }

    pub fn trimap(&self) -> Option<&Trimap> {
        self.current.trimap.as_ref()
    }

    pub fn alpha(&self) -> Option<&Alpha> {
        self.current.alpha.as_ref()
    }

    pub fn view(&self, engine: &Engine) -> SessionView {
        let c = &self.current;
        SessionView {
            id: self.id.clone(),
            width: self.image.width(),
            height: self.image.height(),
            version: self.version,
            mode: c.mode,
            params: c.params,
            guidance: c.guidance.iter().map(GuidanceDto::from_guidance).collect(),
            decision: c.decision.clone(),
            artifacts: ArtifactName::ALL.into_iter().filter(|a| self.has(*a)).collect(),
            undo_depth: self.undo.len(),
            backends: BackendView {
                segmenter: engine.config.segmenter.clone(),
                detector: engine.config.detector.clone(),
                matting: engine.config.matting.clone(),
            },
        }
    }

    fn has(&self, a: ArtifactName) -> bool {
        match a {
            ArtifactName::Mask => self.current.mask.is_some(),
            ArtifactName::Trimap => self.current.trimap.is_some(),
            ArtifactName::Alpha | ArtifactName::Composite | ArtifactName::ForegroundCutout => {
                self.current.alpha.is_some()
            }
        }
    }

    fn commit(&mut self, next: Artifacts, depth: usize) {
        let previous = std::mem::replace(&mut self.current, next);
        self.undo.push_back(previous);
        while self.undo.len() > depth {
            self.undo.pop_front();
        }
        self.version += 1;
    }

    fn detections(&mut self, engine: &Engine) -> Result<DetectionSet, ServiceError> {
        if let Some(d) = &self.detections {
            return Ok(d.clone());
        }
        let decision = decide(
            &self.image,
            TransparencyMode::Auto,
            &engine.config,
            engine.backends.detector.as_ref(),
        )
        .map_err(ServiceError::at(Stage::Detect))?;
        let TransparencyDecision::Auto { detections } = decision else {
            unreachable!("automatic mode yields an automatic decision")
        };
        self.detections = Some(detections.clone());
        Ok(detections)
    }

    /// Recomputes decision, trimap and alpha for `next` (no-op without a mask).
    fn recompute(&mut self, engine: &Engine, next: &mut Artifacts) -> Result<(), ServiceError> {
        let Some(mask) = next.mask.clone() else {
            next.decision = None;
            next.trimap = None;
            next.alpha = None;
            return Ok(());
        };
        let decision = match next.mode {
            TransparencyMode::Auto => TransparencyDecision::Auto {
                detections: self.detections(engine)?,
            },
            TransparencyMode::UserTransparent => TransparencyDecision::UserTransparent,
            TransparencyMode::UserOpaque => TransparencyDecision::UserOpaque,
        };
        let cfg = PipelineConfig {
            morph: next.params,
            ..engine.config.clone()
        };
        let out = run_with_decision(&self.image, mask, decision, &cfg, engine.backends.matting.as_ref())?;
        next.decision = Some(out.decision);
        next.trimap = Some(out.trimap);
        next.alpha = Some(out.alpha);
        Ok(())
    }

    /// Adds guidance and recomputes every artifact.
    pub fn apply_guidance(&mut self, engine: &Engine, g: Guidance) -> Result<(), ServiceError> {
        g.validate(self.image.width(), self.image.height())
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        let mut next = self.current.clone();
        next.prompt = match &g {
            Guidance::Box(b) => Prompt::from_box(*b),
            Guidance::Text(caption) => {
                let b = resolve_text(
                    &self.image,
                    caption,
                    engine.backends.detector.as_ref(),
                    &engine.config.thresholds,
                )
                .map_err(ServiceError::at(Stage::Detect))?;
                Prompt::from_box(b)
            }
            other => {
                let mut p = next.prompt.clone();
                p.push(other).map_err(|e| ServiceError::Validation(e.to_string()))?;
                p
            }
        };
        let mask = segment_checked(&self.image, &next.prompt, engine.backends.segmenter.as_ref())
            .map_err(ServiceError::at(Stage::Segment))?;
        next.mask = Some(mask);
        next.guidance.push(g);
        self.recompute(engine, &mut next)?;
        self.commit(next, engine.settings.undo_depth);
        Ok(())
    }

    /// Replaces the transparency decision mode. Requires a mask.
    pub fn set_transparency(&mut self, engine: &Engine, mode: TransparencyMode) -> Result<(), ServiceError> {
        if self.current.mask.is_none() {
            return Err(ServiceError::Conflict("no mask yet; apply guidance first".into()));
        }
        let mut next = self.current.clone();
        next.mode = mode;
        self.recompute(engine, &mut next)?;
        self.commit(next, engine.settings.undo_depth);
        Ok(())
    }

    /// Replaces the morphology parameters, recomputing when a mask exists.
    pub fn set_params(&mut self, engine: &Engine, params: MorphParams) -> Result<(), ServiceError> {
        let mut next = self.current.clone();
        next.params = params;
        self.recompute(engine, &mut next)?;
        self.commit(next, engine.settings.undo_depth);
        Ok(())
    }

    pub fn undo(&mut self) -> Result<(), ServiceError> {
        let previous = self
            .undo
            .pop_back()
            .ok_or_else(|| ServiceError::Conflict("nothing to undo".into()))?;
        self.current = previous;
        self.version += 1;
        Ok(())
    }

    /// PNG bytes of one artifact.
    pub fn export(&self, which: ArtifactName, background: CompositeBackground) -> Result<Vec<u8>, ServiceError> {
        let missing = || ServiceError::NotFound(format!("artifact `{}` does not exist yet", which.as_str()));
        Ok(match which {
            ArtifactName::Mask => encode_mask(self.current.mask.as_ref().ok_or_else(missing)?),
            ArtifactName::Trimap => encode_trimap(self.current.trimap.as_ref().ok_or_else(missing)?),
            ArtifactName::Alpha => encode_alpha(self.current.alpha.as_ref().ok_or_else(missing)?),
            ArtifactName::Composite => {
                let alpha = self.current.alpha.as_ref().ok_or_else(missing)?;
                let (w, h) = self.image.dims();
                let bg: Image = match background {
                    CompositeBackground::Checkerboard { cell } => checkerboard(w, h, cell.max(1)),
                    CompositeBackground::Flat { color } => RasterImage::filled(w, h, color),
                }
                .map_err(|e| ServiceError::Validation(e.to_string()))?;
                let out = composite(&self.image, &bg, alpha).map_err(|e| ServiceError::Internal(e.to_string()))?;
                encode_image(&out)
            }
            ArtifactName::ForegroundCutout => {
                let alpha = self.current.alpha.as_ref().ok_or_else(missing)?;
                encode_cutout(&self.image, alpha).map_err(|e| ServiceError::Internal(e.to_string()))?
            }
        })
    }

    /// Writes the current planes and state under `dir/<id>/`.
    pub fn write_snapshot(&self, engine: &Engine, dir: &Path) -> std::io::Result<()> {
        let d = dir.join(&self.id);
        std::fs::create_dir_all(&d)?;
        for which in [ArtifactName::Mask, ArtifactName::Trimap, ArtifactName::Alpha] {
            match self.export(which, CompositeBackground::default()) {
                Ok(bytes) => std::fs::write(d.join(format!("{}.png", which.as_str())), bytes)?,
                Err(_) => {
                    let _ = std::fs::remove_file(d.join(format!("{}.png", which.as_str())));
                }
            }
        }
        let state = serde_json::to_vec_pretty(&self.view(engine)).map_err(std::io::Error::other)?;
        std::fs::write(d.join("state.json"), state)
    }
}

/// All live sessions. Each session has its own lock, so mutations of one
/// session are serialized while different sessions proceed in parallel.
pub struct SessionStore {
    engine: Arc<Engine>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl SessionStore {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine: Arc::new(engine),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Decodes the image and registers a fresh session.
    pub fn create(&self, image_bytes: &[u8]) -> Result<SessionView, ServiceError> {
        let image: Image = decode_image(image_bytes).map_err(ServiceError::from_input)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone(), image, self.engine.config.morph);
        let view = session.view(&self.engine);
        lock(&self.sessions).insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{id}`")))
    }

    /// Runs `f` with exclusive access to one session.
    pub fn with<R>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session, &Engine) -> Result<R, ServiceError>,
    ) -> Result<R, ServiceError> {
        let handle = self.get(id)?;
        let mut session = lock(&handle);
        session.last_access = Instant::now();
        f(&mut session, &self.engine)
    }

    /// Like [`with`](Self::with), then writes a snapshot when configured.
    pub fn mutate(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session, &Engine) -> Result<(), ServiceError>,
    ) -> Result<SessionView, ServiceError> {
        self.with(id, |s, engine| {
            f(s, engine)?;
            if let Some(dir) = &engine.settings.snapshot_dir {
                if let Err(e) = s.write_snapshot(engine, dir) {
                    tracing::warn!(session = s.id(), error = %e, "snapshot failed");
                }
            }
            Ok(s.view(engine))
        })
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the TTL as of `now`. Sessions in
    /// use are skipped. Returns how many were removed.
    pub fn sweep(&self, now: Instant) -> usize {
        let ttl = Duration::from_secs(self.engine.settings.ttl_secs);
        let mut sessions = lock(&self.sessions);
        let before = sessions.len();
        sessions.retain(|_, s| match s.try_lock() {
            Ok(s) => now.saturating_duration_since(s.last_access) <= ttl,
            Err(_) => true,
        });
        before - sessions.len()
    }
}

impl Engine {
    /// Resolves the configured backends (built-in or remote).
    pub fn from_config(cfg: &crate::config::ServiceConfig) -> anyhow::Result<Self> {
        let backends = mattelab_bridge::resolve_backends(&cfg.pipeline, &cfg.client)?;
        Ok(Self {
            config: cfg.pipeline.clone(),
            backends,
            settings: cfg.sessions.clone(),
        })
    }
}
