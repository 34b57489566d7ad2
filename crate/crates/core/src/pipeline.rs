//! Mask → transparency decision → pseudo-trimap → alpha.
//!
//! The pipeline is written against the backend traits, so the same code runs
//! with the builtin backends, remote sidecars, or test doubles.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::matting::{matte, ClosedFormBackend, MattingBackend, MattingBackendRef, SolverParams};
use crate::morphology::{dilate, MorphParams};
use crate::perception::{
    detect_transparent, route_guidance, DetectionThresholds, Detector, DetectorRef, Guidance, RegionGrowSegmenter,
    Segmenter, SegmenterRef, StubDetector, TransparencyVocabulary, DEFAULT_COLOR_TOLERANCE,
};
use crate::raster::{ensure_same_dims, AlphaMatte, BinaryMask, RasterImage, Trimap};
use crate::scalar::Scalar;
use crate::trimap::{box_touches, pseudo_trimap, DetectionSet, TransparencyDecision, TransparencyMode};

/// Everything that parameterises one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub morph: MorphParams,
    pub vocabulary: TransparencyVocabulary,
    pub thresholds: DetectionThresholds,
    /// Skip detection boxes that do not touch the dilated instance mask.
    pub require_mask_overlap: bool,
    pub segmenter: SegmenterRef,
    pub detector: DetectorRef,
    pub matting: MattingBackendRef,
    /// Parameters of the builtin closed-form solver.
    pub solver: SolverParams,
    /// Color tolerance of the builtin region-grow segmenter.
    pub color_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            morph: MorphParams::default(),
            vocabulary: TransparencyVocabulary::default(),
            thresholds: DetectionThresholds::default(),
            require_mask_overlap: false,
            segmenter: SegmenterRef::default(),
            detector: DetectorRef::default(),
            matting: MattingBackendRef::default(),
            solver: SolverParams::default(),
            color_tolerance: DEFAULT_COLOR_TOLERANCE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.color_tolerance.is_finite() && self.color_tolerance >= 0.0) {
            return Err(Error::invalid(format!(
                "color tolerance {} must be finite and ≥ 0",
                self.color_tolerance
            )));
        }
        Ok(())
    }
}

/// Concrete backends a pipeline dispatches to.
pub struct Backends<T: Scalar> {
    pub segmenter: Arc<dyn Segmenter<T>>,
    pub detector: Arc<dyn Detector<T>>,
    pub matting: Arc<dyn MattingBackend<T>>,
}

impl<T: Scalar> Clone for Backends<T> {
    fn clone(&self) -> Self {
        Self {
            segmenter: Arc::clone(&self.segmenter),
            detector: Arc::clone(&self.detector),
            matting: Arc::clone(&self.matting),
        }
    }
}

impl<T: Scalar> Backends<T> {
    /// Instantiates the in-process backends named by `cfg`. Remote references
    /// need a transport and are resolved by the bridge crate instead.
    pub fn builtin(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let segmenter: Arc<dyn Segmenter<T>> = match &cfg.segmenter {
            SegmenterRef::BuiltinRegionGrow => Arc::new(RegionGrowSegmenter {
                color_tolerance: cfg.color_tolerance,
            }),
            SegmenterRef::Remote { endpoint } => return Err(remote_unavailable("segmenter", endpoint)),
        };
        let detector: Arc<dyn Detector<T>> = match &cfg.detector {
            DetectorRef::Stub { detections } => Arc::new(StubDetector::new(detections.clone())),
            DetectorRef::Remote { endpoint } => return Err(remote_unavailable("detector", endpoint)),
        };
        let matting: Arc<dyn MattingBackend<T>> = match &cfg.matting {
            MattingBackendRef::BuiltinClosedForm => Arc::new(ClosedFormBackend::new(cfg.solver)),
            MattingBackendRef::Remote { endpoint } => return Err(remote_unavailable("matting backend", endpoint)),
        };
        Ok(Self {
            segmenter,
            detector,
            matting,
        })
    }
}

fn remote_unavailable(what: &str, endpoint: &url::Url) -> Error {
    Error::invalid(format!(
        "remote {what} at {endpoint} needs a sidecar transport; resolve it through the bridge"
    ))
}

/// Pipeline step a failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Segment,
    Detect,
    Trimap,
    Matte,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Segment => "segment",
            Stage::Detect => "detect",
            Stage::Trimap => "trimap",
            Stage::Matte => "matte",
        })
    }
}

/// A pipeline error labelled with the step that raised it.
#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<V> {
    fn at(self, stage: Stage) -> std::result::Result<V, StageError>;
}

impl<V> AtStage<V> for Result<V> {
    fn at(self, stage: Stage) -> std::result::Result<V, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Artifacts of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput<T> {
    pub mask: BinaryMask,
    pub decision: TransparencyDecision,
    pub trimap: Trimap,
    pub alpha: AlphaMatte<T>,
}

/// Detections that would drive an automatic correction for `mask`: thresholded,
/// and with the overlap filter applied when enabled.
pub fn transparency_detections<T: Scalar>(
    image: &RasterImage<T>,
    mask: Option<&BinaryMask>,
    cfg: &PipelineConfig,
    detector: &dyn Detector<T>,
) -> Result<DetectionSet> {
    let dets = detect_transparent(image, &cfg.vocabulary, &cfg.thresholds, detector)?;
    match mask {
        Some(m) if cfg.require_mask_overlap => {
            ensure_same_dims(image.dims(), m.dims(), "image/mask")?;
            let dilated = dilate(m, &cfg.morph);
            DetectionSet::new(
                dets.items
                    .into_iter()
                    .filter(|d| box_touches(&d.bbox, &dilated))
                    .collect(),
            )
        }
        _ => Ok(dets),
    }
}

/// Whether the detector flags the image as containing a transparent object.
pub fn predict_transparency<T: Scalar>(
    image: &RasterImage<T>,
    mask: Option<&BinaryMask>,
    cfg: &PipelineConfig,
    detector: &dyn Detector<T>,
) -> Result<bool> {
    Ok(!transparency_detections(image, mask, cfg, detector)?.is_empty())
}

/// Turns a mode into a decision; automatic mode consults the detector.
pub fn decide<T: Scalar>(
    image: &RasterImage<T>,
    mode: TransparencyMode,
    cfg: &PipelineConfig,
    detector: &dyn Detector<T>,
) -> Result<TransparencyDecision> {
    Ok(match mode {
        TransparencyMode::Auto => TransparencyDecision::Auto {
            detections: detect_transparent(image, &cfg.vocabulary, &cfg.thresholds, detector)?,
        },
        TransparencyMode::UserTransparent => TransparencyDecision::UserTransparent,
        TransparencyMode::UserOpaque => TransparencyDecision::UserOpaque,
    })
}

/// Trimap and alpha for a mask under a fixed decision.
pub fn run_with_decision<T: Scalar>(
    image: &RasterImage<T>,
    mask: BinaryMask,
    decision: TransparencyDecision,
    cfg: &PipelineConfig,
    matting: &dyn MattingBackend<T>,
) -> std::result::Result<PipelineOutput<T>, StageError> {
    ensure_same_dims(image.dims(), mask.dims(), "image/mask").at(Stage::Trimap)?;
    let trimap = pseudo_trimap(&mask, &decision, &cfg.morph, cfg.require_mask_overlap).at(Stage::Trimap)?;
    let alpha = matte(image, &trimap, matting).at(Stage::Matte)?;
    Ok(PipelineOutput {
        mask,
        decision,
        trimap,
        alpha,
    })
}

/// Full run from an instance mask.
pub fn run_from_mask<T: Scalar>(
    image: &RasterImage<T>,
    mask: BinaryMask,
    mode: TransparencyMode,
    cfg: &PipelineConfig,
    backends: &Backends<T>,
) -> std::result::Result<PipelineOutput<T>, StageError> {
    let decision = decide(image, mode, cfg, backends.detector.as_ref()).at(Stage::Detect)?;
    run_with_decision(image, mask, decision, cfg, backends.matting.as_ref())
}

/// Full run from a single piece of guidance.
pub fn run<T: Scalar>(
    image: &RasterImage<T>,
    guidance: &Guidance,
    mode: TransparencyMode,
    cfg: &PipelineConfig,
    backends: &Backends<T>,
) -> std::result::Result<PipelineOutput<T>, StageError> {
    let mask = route_guidance(
        image,
        guidance,
        backends.segmenter.as_ref(),
        backends.detector.as_ref(),
        &cfg.thresholds,
    )
    .at(Stage::Segment)?;
    run_from_mask(image, mask, mode, cfg, backends)
}
