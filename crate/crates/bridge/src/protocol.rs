//! Sidecar protocol v1: wire bodies and the conformance checker.
//!
//! ```text
//! POST /v1/segment {image_b64, points:[{x,y,label}], boxes:[[x0,y0,x1,y1]]} → {mask_b64, model_id}
//! POST /v1/detect  {image_b64, captions, box_threshold, text_threshold}   → {detections:[{box,label,score}], model_id}
//! POST /v1/matte   {image_b64, trimap_b64}                                → {alpha_b64, model_id}
//! GET  /v1/health                                                         → {status:"ok", model_id}
//! ```
//!
//! Planes travel as standard base-64 of 8-bit grayscale PNG; images as RGB PNG.
//! Unknown fields are ignored; a missing or ill-typed required field is a
//! protocol violation naming the field path.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use mattelab_core::codec::{decode_alpha, decode_image, decode_mask, decode_trimap, encode_image, encode_trimap};
use mattelab_core::perception::{DetectionThresholds, PointPrompt, Polarity};
use mattelab_core::raster::{AlphaMatte, RasterImage};
use mattelab_core::{BinaryMask, BoundingBox, Detection, DetectionSet, RemoteError, Scalar, Trimap};
use serde_json::{json, Map, Value};

pub const SEGMENT_PATH: &str = "v1/segment";
pub const DETECT_PATH: &str = "v1/detect";
pub const MATTE_PATH: &str = "v1/matte";
pub const HEALTH_PATH: &str = "v1/health";

/// An RGB image as it travels on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub png: Vec<u8>,
    pub width: usize,
    pub height: usize,
}

impl EncodedImage {
    pub fn encode<T: Scalar>(image: &RasterImage<T>) -> Self {
        Self {
            png: encode_image(image),
            width: image.width(),
            height: image.height(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    Segment,
    Detect,
    Matte,
}

impl RequestKind {
    pub fn path(self) -> &'static str {
        match self {
            RequestKind::Segment => SEGMENT_PATH,
            RequestKind::Detect => DETECT_PATH,
            RequestKind::Matte => MATTE_PATH,
        }
    }
}

/// One call to a sidecar.
#[derive(Debug, Clone, PartialEq)]
pub enum SidecarRequest {
    Segment {
        image: EncodedImage,
        points: Vec<PointPrompt>,
        boxes: Vec<BoundingBox>,
    },
    Detect {
        image: EncodedImage,
        captions: Vec<String>,
        thresholds: DetectionThresholds,
    },
    Matte {
        image: EncodedImage,
        trimap: Trimap,
    },
}

impl SidecarRequest {
    pub fn kind(&self) -> RequestKind {
        match self {
            SidecarRequest::Segment { .. } => RequestKind::Segment,
            SidecarRequest::Detect { .. } => RequestKind::Detect,
            SidecarRequest::Matte { .. } => RequestKind::Matte,
        }
    }

    pub fn image(&self) -> &EncodedImage {
        match self {
            SidecarRequest::Segment { image, .. }
            | SidecarRequest::Detect { image, .. }
            | SidecarRequest::Matte { image, .. } => image,
        }
    }

    /// Local sanity checks before anything goes on the wire.
    pub fn validate(&self) -> Result<(), String> {
        let image = self.image();
        if image.png.is_empty() || image.width == 0 || image.height == 0 {
            return Err("image is empty".into());
        }
        let (w, h) = image.dims();
        match self {
            SidecarRequest::Segment { points, boxes, .. } => {
                if points.is_empty() && boxes.is_empty() {
                    return Err("segment request needs at least one point or box".into());
                }
                if let Some(p) = points.iter().find(|p| p.x as usize >= w || p.y as usize >= h) {
                    return Err(format!("point ({}, {}) outside {w}x{h} image", p.x, p.y));
                }
                if let Some(b) = boxes.iter().find(|b| !b.fits(w, h)) {
                    return Err(format!("box {:?} outside {w}x{h} image", b.to_array()));
                }
            }
            SidecarRequest::Detect { captions, .. } => {
                if captions.is_empty() {
                    return Err("detect request needs at least one caption".into());
                }
            }
            SidecarRequest::Matte { trimap, .. } => {
                if trimap.dims() != (w, h) {
                    return Err(format!(
                        "trimap is {}x{}, image is {w}x{h}",
                        trimap.width(),
                        trimap.height()
                    ));
                }
            }
        }
        Ok(())
    }

    /// The JSON request body.
    pub fn to_body(&self) -> Value {
        let image_b64 = STANDARD.encode(&self.image().png);
        match self {
            SidecarRequest::Segment { points, boxes, .. } => json!({
                "image_b64": image_b64,
                "points": points.iter().map(|p| json!({
                    "x": p.x,
                    "y": p.y,
                    "label": u8::from(p.polarity.is_positive()),
                })).collect::<Vec<_>>(),
                "boxes": boxes.iter().map(|b| b.to_array()).collect::<Vec<_>>(),
            }),
            SidecarRequest::Detect {
                captions, thresholds, ..
            } => json!({
                "image_b64": image_b64,
                "captions": captions,
                "box_threshold": thresholds.box_threshold(),
                "text_threshold": thresholds.text_threshold(),
            }),
            SidecarRequest::Matte { trimap, .. } => json!({
                "image_b64": image_b64,
                "trimap_b64": STANDARD.encode(encode_trimap(trimap)),
            }),
        }
    }
}

/// A conformant sidecar answer.
#[derive(Debug, Clone, PartialEq)]
pub struct SidecarResponse {
    pub payload: ResponsePayload,
    pub model_id: String,
    /// Wall-clock time of the successful attempt.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponsePayload {
    Mask(BinaryMask),
    Detections(DetectionSet),
    Alpha(AlphaMatte<f64>),
}

fn violation(field: impl Into<String>, detail: impl Into<String>) -> RemoteError {
    RemoteError::protocol(field, detail)
}

fn as_object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>, RemoteError> {
    v.as_object().ok_or_else(|| violation(field, "expected an object"))
}

fn required<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, RemoteError> {
    obj.get(key).ok_or_else(|| violation(path, "missing required field"))
}

fn required_str<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a str, RemoteError> {
    required(obj, path, key)?
        .as_str()
        .ok_or_else(|| violation(path, "expected a string"))
}

fn plane_bytes(obj: &Map<String, Value>, key: &str) -> Result<Vec<u8>, RemoteError> {
    let b64 = required_str(obj, key, key)?;
    STANDARD
        .decode(b64)
        .map_err(|e| violation(key, format!("invalid base-64: {e}")))
}

fn check_dims(field: &str, got: (usize, usize), want: (usize, usize)) -> Result<(), RemoteError> {
    if got != want {
        return Err(violation(
            field,
            format!("plane is {}x{}, request image is {}x{}", got.0, got.1, want.0, want.1),
        ));
    }
    Ok(())
}

/// Validates a response body against the request it answers.
pub fn check_response(
    kind: RequestKind,
    dims: (usize, usize),
    body: &Value,
) -> Result<(ResponsePayload, String), RemoteError> {
    let obj = as_object(body, "$")?;
    let model_id = required_str(obj, "model_id", "model_id")?.to_string();
    let payload = match kind {
        RequestKind::Segment => {
            let mask = decode_mask(&plane_bytes(obj, "mask_b64")?).map_err(|e| violation("mask_b64", e.to_string()))?;
            check_dims("mask", mask.dims(), dims)?;
            ResponsePayload::Mask(mask)
        }
        RequestKind::Matte => {
            let alpha: AlphaMatte<f64> =
                decode_alpha(&plane_bytes(obj, "alpha_b64")?).map_err(|e| violation("alpha_b64", e.to_string()))?;
            check_dims("alpha", alpha.dims(), dims)?;
            ResponsePayload::Alpha(alpha)
        }
        RequestKind::Detect => ResponsePayload::Detections(check_detections(obj, dims)?),
    };
    Ok((payload, model_id))
}

fn check_detections(obj: &Map<String, Value>, (w, h): (usize, usize)) -> Result<DetectionSet, RemoteError> {
    let list = required(obj, "detections", "detections")?
        .as_array()
        .ok_or_else(|| violation("detections", "expected an array"))?;
    let mut items = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let base = format!("detections[{i}]");
        let d = as_object(entry, &base)?;
        let box_path = format!("{base}.box");
        let coords = required(d, &box_path, "box")?
            .as_array()
            .filter(|a| a.len() == 4)
            .ok_or_else(|| violation(&box_path, "expected [x0, y0, x1, y1]"))?;
        let mut c = [0u32; 4];
        for (slot, v) in c.iter_mut().zip(coords) {
            *slot = v
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| violation(&box_path, "coordinates must be non-negative integers"))?;
        }
        let bbox = BoundingBox::try_from(c).map_err(|e| violation(&box_path, e.to_string()))?;
        if !bbox.fits(w, h) {
            return Err(violation(&box_path, format!("box {c:?} exceeds {w}x{h} image")));
        }
        let label = required_str(d, &format!("{base}.label"), "label")?.to_string();
        let score_path = format!("{base}.score");
        let score = required(d, &score_path, "score")?
            .as_f64()
            .filter(|s| (0.0..=1.0).contains(s))
            .ok_or_else(|| violation(&score_path, "expected a number in [0, 1]"))?;
        items.push(Detection { bbox, label, score });
    }
    DetectionSet::new(items).map_err(|e| violation("detections", e.to_string()))
}

/// Validates a health body, returning the advertised model id.
pub fn check_health(body: &Value) -> Result<String, RemoteError> {
    let obj = as_object(body, "$")?;
    let status = required_str(obj, "status", "status")?;
    if status != "ok" {
        return Err(violation("status", format!("expected \"ok\", got {status:?}")));
    }
    Ok(required_str(obj, "model_id", "model_id")?.to_string())
}

/// A request as a sidecar sees it after parsing the body.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedRequest {
    Segment {
        image: RasterImage<f64>,
        points: Vec<PointPrompt>,
        boxes: Vec<BoundingBox>,
    },
    Detect {
        image: RasterImage<f64>,
        captions: Vec<String>,
        box_threshold: f64,
        text_threshold: f64,
    },
    Matte {
        image: RasterImage<f64>,
        trimap: Trimap,
    },
}

/// Server-side parsing of a request body; errors carry the field path.
pub fn parse_request(kind: RequestKind, body: &Value) -> Result<ParsedRequest, RemoteError> {
    let obj = as_object(body, "$")?;
    let image_bytes = plane_bytes(obj, "image_b64")?;
    let image: RasterImage<f64> = decode_image(&image_bytes).map_err(|e| violation("image_b64", e.to_string()))?;
    Ok(match kind {
        RequestKind::Segment => {
            let mut points = Vec::new();
            if let Some(list) = obj.get("points") {
                let list = list
                    .as_array()
                    .ok_or_else(|| violation("points", "expected an array"))?;
                for (i, p) in list.iter().enumerate() {
                    let path = format!("points[{i}]");
                    let p = as_object(p, &path)?;
                    let coord = |k: &str| -> Result<u32, RemoteError> {
                        let f = format!("{path}.{k}");
                        required(p, &f, k)?
                            .as_u64()
                            .and_then(|v| u32::try_from(v).ok())
                            .ok_or_else(|| violation(&f, "expected a non-negative integer"))
                    };
                    let polarity = match required(p, &format!("{path}.label"), "label")?.as_u64() {
                        Some(1) => Polarity::Positive,
                        Some(0) => Polarity::Negative,
                        _ => return Err(violation(format!("{path}.label"), "expected 0 or 1")),
                    };
                    points.push(PointPrompt {
                        x: coord("x")?,
                        y: coord("y")?,
                        polarity,
                    });
                }
            }
            let mut boxes = Vec::new();
            if let Some(list) = obj.get("boxes") {
                let list: Vec<[u32; 4]> =
                    serde_json::from_value(list.clone()).map_err(|e| violation("boxes", e.to_string()))?;
                for (i, b) in list.into_iter().enumerate() {
                    boxes.push(BoundingBox::try_from(b).map_err(|e| violation(format!("boxes[{i}]"), e.to_string()))?);
                }
            }
            ParsedRequest::Segment { image, points, boxes }
        }
        RequestKind::Detect => {
            let captions: Vec<String> = serde_json::from_value(required(obj, "captions", "captions")?.clone())
                .map_err(|e| violation("captions", e.to_string()))?;
            let number = |k: &str| -> Result<f64, RemoteError> {
                required(obj, k, k)?
                    .as_f64()
                    .ok_or_else(|| violation(k, "expected a number"))
            };
            ParsedRequest::Detect {
                image,
                captions,
                box_threshold: number("box_threshold")?,
                text_threshold: number("text_threshold")?,
            }
        }
        RequestKind::Matte => {
            let trimap =
                decode_trimap(&plane_bytes(obj, "trimap_b64")?).map_err(|e| violation("trimap_b64", e.to_string()))?;
            check_dims("trimap_b64", trimap.dims(), image.dims())?;
            ParsedRequest::Matte { image, trimap }
        }
    })
}
