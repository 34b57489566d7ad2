//! Remote sidecars behind the core backend traits.

use std::sync::Arc;

use mattelab_core::matting::{ClosedFormBackend, MattingBackend, MattingBackendRef};
use mattelab_core::perception::{
    DetectionThresholds, Detector, DetectorRef, Prompt, RegionGrowSegmenter, Segmenter, SegmenterRef, StubDetector,
};
use mattelab_core::pipeline::{Backends, PipelineConfig};
use mattelab_core::raster::{Plane, RasterImage};
use mattelab_core::{BinaryMask, DetectionSet, Error, RemoteError, Result, Scalar, Trimap};
use url::Url;

use crate::client::{remote_invoke, ClientLimits};
use crate::protocol::{EncodedImage, ResponsePayload, SidecarRequest, SidecarResponse};

fn call(name: &str, endpoint: &Url, req: &SidecarRequest, limits: &ClientLimits) -> Result<SidecarResponse> {
    remote_invoke(endpoint, req, limits).map_err(|source| Error::Remote {
        backend: name.to_string(),
        source,
    })
}

fn unexpected(name: &str) -> Error {
    Error::Remote {
        backend: name.to_string(),
        source: RemoteError::protocol("$", "response payload does not match the request kind"),
    }
}

/// Segmenter served over `/v1/segment`. Scribbles are sent as subsampled points.
#[derive(Debug, Clone)]
pub struct RemoteSegmenter {
    pub endpoint: Url,
    pub limits: ClientLimits,
}

impl<T: Scalar> Segmenter<T> for RemoteSegmenter {
    fn name(&self) -> String {
        format!("remote-segmenter@{}", self.endpoint)
    }

    fn segment(&self, image: &RasterImage<T>, prompt: &Prompt) -> Result<BinaryMask> {
        let name = Segmenter::<T>::name(self);
        let req = SidecarRequest::Segment {
            image: EncodedImage::encode(image),
            points: prompt.wire_points(),
            boxes: prompt.boxes.clone(),
        };
        match call(&name, &self.endpoint, &req, &self.limits)?.payload {
            ResponsePayload::Mask(m) => Ok(m),
            _ => Err(unexpected(&name)),
        }
    }
}

/// Open-vocabulary detector served over `/v1/detect`.
#[derive(Debug, Clone)]
pub struct RemoteDetector {
    pub endpoint: Url,
    pub limits: ClientLimits,
}

impl<T: Scalar> Detector<T> for RemoteDetector {
    fn name(&self) -> String {
        format!("remote-detector@{}", self.endpoint)
    }

    fn detect(&self, image: &RasterImage<T>, captions: &[String], th: &DetectionThresholds) -> Result<DetectionSet> {
        let name = Detector::<T>::name(self);
        let req = SidecarRequest::Detect {
            image: EncodedImage::encode(image),
            captions: captions.to_vec(),
            thresholds: *th,
        };
        match call(&name, &self.endpoint, &req, &self.limits)?.payload {
            ResponsePayload::Detections(d) => Ok(d),
            _ => Err(unexpected(&name)),
        }
    }
}

/// Trimap-based matting model served over `/v1/matte`.
#[derive(Debug, Clone)]
pub struct RemoteMatting {
    pub endpoint: Url,
    pub limits: ClientLimits,
}

impl<T: Scalar> MattingBackend<T> for RemoteMatting {
    fn name(&self) -> String {
        format!("remote-matting@{}", self.endpoint)
    }

    fn predict(&self, image: &RasterImage<T>, trimap: &Trimap) -> Result<Plane<T>> {
        let name = MattingBackend::<T>::name(self);
        let req = SidecarRequest::Matte {
            image: EncodedImage::encode(image),
            trimap: trimap.clone(),
        };
        match call(&name, &self.endpoint, &req, &self.limits)?.payload {
            ResponsePayload::Alpha(a) => {
                Plane::new(a.width(), a.height(), a.values().iter().map(|&v| T::of(v)).collect())
            }
            _ => Err(unexpected(&name)),
        }
    }
}

/// Instantiates every backend named by `cfg`, builtin or remote.
pub fn resolve_backends<T: Scalar>(cfg: &PipelineConfig, limits: &ClientLimits) -> Result<Backends<T>> {
    cfg.validate()?;
    let segmenter: Arc<dyn Segmenter<T>> = match &cfg.segmenter {
        SegmenterRef::BuiltinRegionGrow => Arc::new(RegionGrowSegmenter {
            color_tolerance: cfg.color_tolerance,
        }),
        SegmenterRef::Remote { endpoint } => Arc::new(RemoteSegmenter {
            endpoint: endpoint.clone(),
            limits: *limits,
        }),
    };
    let detector: Arc<dyn Detector<T>> = match &cfg.detector {
        DetectorRef::Stub { detections } => Arc::new(StubDetector::new(detections.clone())),
        DetectorRef::Remote { endpoint } => Arc::new(RemoteDetector {
            endpoint: endpoint.clone(),
            limits: *limits,
        }),
    };
    let matting: Arc<dyn MattingBackend<T>> = match &cfg.matting {
        MattingBackendRef::BuiltinClosedForm => Arc::new(ClosedFormBackend::new(cfg.solver)),
        MattingBackendRef::Remote { endpoint } => Arc::new(RemoteMatting {
            endpoint: endpoint.clone(),
            limits: *limits,
        }),
    };
    Ok(Backends {
        segmenter,
        detector,
        matting,
    })
}
