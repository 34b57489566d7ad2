//! Guidance routing, transparency detection and the builtin segmenter.
//!
//! Point, box and scribble guidance go straight to the segmenter. Text goes to
//! the open-vocabulary detector first, and its best box becomes the segmenter
//! prompt.

mod region_grow;
mod vocabulary;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use url::Url;

pub use region_grow::{region_grow_segment, RegionGrowSegmenter, DEFAULT_COLOR_TOLERANCE};
pub use vocabulary::TransparencyVocabulary;

use crate::error::{Error, RemoteError, Result};
use crate::raster::{ensure_same_dims, BinaryMask, RasterImage};
use crate::scalar::Scalar;
use crate::trimap::{BoundingBox, Detection, DetectionSet};

/// Upper bound on points sent to a remote segmenter per scribble.
pub const MAX_SCRIBBLE_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        self == Polarity::Positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

impl PointPrompt {
    pub fn positive(x: u32, y: u32) -> Self {
        Self {
            x,
            y,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(x: u32, y: u32) -> Self {
        Self {
            x,
            y,
            polarity: Polarity::Negative,
        }
    }
}

/// One piece of user guidance.
#[derive(Debug, Clone, PartialEq)]
pub enum Guidance {
    Points(Vec<PointPrompt>),
    Box(BoundingBox),
    Scribble { stroke: BinaryMask, polarity: Polarity },
    Text(String),
}

impl Guidance {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        match self {
            Guidance::Points(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidGuidance("empty point list".into()));
                }
                for p in points {
                    if p.x as usize >= width || p.y as usize >= height {
                        return Err(Error::InvalidGuidance(format!(
                            "point ({}, {}) outside {width}x{height} image",
                            p.x, p.y
                        )));
                    }
                }
                Ok(())
            }
            Guidance::Box(b) => b
                .check_fits(width, height)
                .map_err(|e| Error::InvalidGuidance(e.to_string())),
            Guidance::Scribble { stroke, .. } => {
                ensure_same_dims(stroke.dims(), (width, height), "scribble/image")
                    .map_err(|e| Error::InvalidGuidance(e.to_string()))?;
                if stroke.is_empty() {
                    return Err(Error::InvalidGuidance("empty scribble".into()));
                }
                Ok(())
            }
            Guidance::Text(caption) => {
                if caption.trim().is_empty() {
                    return Err(Error::InvalidGuidance("empty text prompt".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self, Guidance::Text(_))
    }
}

/// Segmenter input: any mix of points, boxes and scribbles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prompt {
    pub points: Vec<PointPrompt>,
    pub boxes: Vec<BoundingBox>,
    pub scribbles: Vec<(BinaryMask, Polarity)>,
}

impl Prompt {
    pub fn from_box(b: BoundingBox) -> Self {
        Self {
            boxes: vec![b],
            ..Self::default()
        }
    }

    /// Adds non-text guidance to the prompt. Text must be resolved to a box first.
    pub fn push(&mut self, g: &Guidance) -> Result<()> {
        match g {
            Guidance::Points(p) => self.points.extend_from_slice(p),
            Guidance::Box(b) => self.boxes.push(*b),
            Guidance::Scribble { stroke, polarity } => self.scribbles.push((stroke.clone(), *polarity)),
            Guidance::Text(_) => {
                return Err(Error::InvalidGuidance(
                    "text guidance must be routed through the detector".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn from_guidance(g: &Guidance) -> Result<Self> {
        let mut p = Self::default();
        p.push(g)?;
        Ok(p)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.boxes.is_empty() && self.scribbles.is_empty()
    }

    /// Points for a point-and-box-only segmenter: explicit points first, then
    /// each scribble subsampled to at most [`MAX_SCRIBBLE_POINTS`].
    pub fn wire_points(&self) -> Vec<PointPrompt> {
        let mut out = self.points.clone();
        for (stroke, polarity) in &self.scribbles {
            out.extend(scribble_points(stroke, *polarity, MAX_SCRIBBLE_POINTS));
        }
        out
    }
}

/// Row-major stroke pixels sampled with a fixed stride so at most `max` remain.
pub fn scribble_points(stroke: &BinaryMask, polarity: Polarity, max: usize) -> Vec<PointPrompt> {
    let count = stroke.count();
    if count == 0 || max == 0 {
        return Vec::new();
    }
    let stride = count.div_ceil(max);
    stroke
        .iter_set()
        .step_by(stride)
        .map(|(x, y)| PointPrompt {
            x: x as u32,
            y: y as u32,
            polarity,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThresholds", into = "RawThresholds")]
pub struct DetectionThresholds {
    box_threshold: f64,
    text_threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct RawThresholds {
    box_threshold: f64,
    text_threshold: f64,
}

impl TryFrom<RawThresholds> for DetectionThresholds {
    type Error = Error;

    fn try_from(r: RawThresholds) -> Result<Self> {
        DetectionThresholds::new(r.box_threshold, r.text_threshold)
    }
}

impl From<DetectionThresholds> for RawThresholds {
    fn from(t: DetectionThresholds) -> Self {
        RawThresholds {
            box_threshold: t.box_threshold,
            text_threshold: t.text_threshold,
        }
    }
}

impl DetectionThresholds {
    pub fn new(box_threshold: f64, text_threshold: f64) -> Result<Self> {
        for (name, v) in [("box_threshold", box_threshold), ("text_threshold", text_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} {v} outside (0, 1)")));
            }
        }
        Ok(Self {
            box_threshold,
            text_threshold,
        })
    }

    pub fn box_threshold(&self) -> f64 {
        self.box_threshold
    }

    pub fn text_threshold(&self) -> f64 {
        self.text_threshold
    }
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self {
            box_threshold: 0.4,
            text_threshold: 0.25,
        }
    }
}

/// Promptable segmentation model.
pub trait Segmenter<T: Scalar>: Send + Sync {
    fn name(&self) -> String;
    fn segment(&self, image: &RasterImage<T>, prompt: &Prompt) -> Result<BinaryMask>;
}

/// Open-vocabulary detector.
pub trait Detector<T: Scalar>: Send + Sync {
    fn name(&self) -> String;
    fn detect(&self, image: &RasterImage<T>, captions: &[String], th: &DetectionThresholds) -> Result<DetectionSet>;
}

/// Detector returning a fixed detection set for every query.
#[derive(Debug, Clone, Default)]
pub struct StubDetector {
    pub detections: DetectionSet,
}

impl StubDetector {
    pub fn new(detections: DetectionSet) -> Self {
        Self { detections }
    }
}

impl<T: Scalar> Detector<T> for StubDetector {
    fn name(&self) -> String {
        "stub-detector".into()
    }

    fn detect(&self, _: &RasterImage<T>, _: &[String], _: &DetectionThresholds) -> Result<DetectionSet> {
        Ok(self.detections.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmenterRef {
    #[default]
    BuiltinRegionGrow,
    Remote {
        endpoint: Url,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorRef {
    Remote { endpoint: Url },
    Stub { detections: DetectionSet },
}

impl Default for DetectorRef {
    fn default() -> Self {
        DetectorRef::Stub {
            detections: DetectionSet::default(),
        }
    }
}

fn by_score_then_box(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.bbox.cmp(&b.bbox))
}

fn check_detections<T: Scalar, D: Detector<T> + ?Sized>(
    det: &D,
    dets: &DetectionSet,
    width: usize,
    height: usize,
) -> Result<()> {
    for (i, d) in dets.items.iter().enumerate() {
        if !d.bbox.fits(width, height) {
            return Err(Error::Remote {
                backend: det.name(),
                source: RemoteError::protocol(
                    format!("detections[{i}].box"),
                    format!("box {:?} exceeds {width}x{height} image", d.bbox.to_array()),
                ),
            });
        }
        if !(0.0..=1.0).contains(&d.score) {
            return Err(Error::Remote {
                backend: det.name(),
                source: RemoteError::protocol(
                    format!("detections[{i}].score"),
                    format!("score {} outside [0,1]", d.score),
                ),
            });
        }
    }
    Ok(())
}

/// Highest-scoring box for `caption` at or above the box threshold.
pub fn resolve_text<T: Scalar, D: Detector<T> + ?Sized>(
    image: &RasterImage<T>,
    caption: &str,
    det: &D,
    th: &DetectionThresholds,
) -> Result<BoundingBox> {
    let dets = det.detect(image, &[caption.to_string()], th)?;
    check_detections(det, &dets, image.width(), image.height())?;
    dets.items
        .iter()
        .filter(|d| d.score >= th.box_threshold())
        .min_by(|a, b| by_score_then_box(a, b))
        .map(|d| d.bbox)
        .ok_or_else(|| Error::NoDetection {
            caption: caption.to_string(),
        })
}

/// Mask for one piece of guidance. The detector is contacted only for text.
pub fn route_guidance<T, S, D>(
    image: &RasterImage<T>,
    g: &Guidance,
    seg: &S,
    det: &D,
    th: &DetectionThresholds,
) -> Result<BinaryMask>
where
    T: Scalar,
    S: Segmenter<T> + ?Sized,
    D: Detector<T> + ?Sized,
{
    g.validate(image.width(), image.height())?;
    let prompt = match g {
        Guidance::Text(caption) => Prompt::from_box(resolve_text(image, caption, det, th)?),
        other => Prompt::from_guidance(other)?,
    };
    segment_checked(image, &prompt, seg)
}

/// Runs the segmenter and checks that the mask matches the image.
pub fn segment_checked<T, S>(image: &RasterImage<T>, prompt: &Prompt, seg: &S) -> Result<BinaryMask>
where
    T: Scalar,
    S: Segmenter<T> + ?Sized,
{
    let mask = seg.segment(image, prompt)?;
    if mask.dims() != image.dims() {
        return Err(Error::Remote {
            backend: seg.name(),
            source: RemoteError::protocol(
                "mask",
                format!(
                    "mask is {}x{}, image is {}x{}",
                    mask.width(),
                    mask.height(),
                    image.width(),
                    image.height()
                ),
            ),
        });
    }
    Ok(mask)
}

/// Queries the detector once per vocabulary term and keeps detections at or
/// above the box threshold. Merged order: term order, then score descending,
/// then box lexicographic.
pub fn detect_transparent<T: Scalar, D: Detector<T> + ?Sized>(
    image: &RasterImage<T>,
    vocab: &TransparencyVocabulary,
    th: &DetectionThresholds,
    det: &D,
) -> Result<DetectionSet> {
    let mut merged = Vec::new();
    for term in vocab.terms() {
        let mut dets = det.detect(image, std::slice::from_ref(term), th)?;
        check_detections(det, &dets, image.width(), image.height())?;
        dets.items.sort_by(by_score_then_box);
        merged.extend(dets.items.into_iter().filter(|d| d.score >= th.box_threshold()));
    }
    DetectionSet::new(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
    use std::sync::Mutex;

    struct CountingSegmenter {
        calls: AtomicUsize,
        last: Mutex<Option<Prompt>>,
    }

    impl CountingSegmenter {
        fn new() -> Self {
            Self {
                calls: AtomicUsize::new(0),
                last: Mutex::new(None),
            }
        }
    }

    impl Segmenter<f64> for CountingSegmenter {
        fn name(&self) -> String {
            "counting".into()
        }

        fn segment(&self, image: &RasterImage<f64>, prompt: &Prompt) -> Result<BinaryMask> {
            self.calls.fetch_add(1, AtomicOrdering::SeqCst);
            *self.last.lock().unwrap() = Some(prompt.clone());
            BinaryMask::filled(image.width(), image.height(), true)
        }
    }

    struct CountingDetector {
        calls: AtomicUsize,
        dets: DetectionSet,
    }

    impl Detector<f64> for CountingDetector {
        fn name(&self) -> String {
            "counting-detector".into()
        }

        fn detect(&self, _: &RasterImage<f64>, captions: &[String], _: &DetectionThresholds) -> Result<DetectionSet> {
            assert_eq!(captions.len(), 1);
            self.calls.fetch_add(1, AtomicOrdering::SeqCst);
            Ok(self.dets.clone())
        }
    }

    fn det(b: [u32; 4], score: f64) -> Detection {
        Detection {
            bbox: BoundingBox::try_from(b).unwrap(),
            label: "x".into(),
            score,
        }
    }

    fn detector(items: Vec<Detection>) -> CountingDetector {
        CountingDetector {
            calls: AtomicUsize::new(0),
            dets: DetectionSet::new(items).unwrap(),
        }
    }

    fn image() -> RasterImage<f64> {
        RasterImage::filled(10, 10, [0.5; 3]).unwrap()
    }

    #[test]
    fn non_text_never_contacts_detector() {
        let seg = CountingSegmenter::new();
        let d = detector(vec![det([0, 0, 5, 5], 0.9)]);
        let th = DetectionThresholds::default();
        let stroke = BinaryMask::from_fn(10, 10, |x, y| x == y).unwrap();
        for g in [
            Guidance::Points(vec![PointPrompt::positive(3, 3)]),
            Guidance::Box(BoundingBox::new(1, 1, 4, 4).unwrap()),
            Guidance::Scribble {
                stroke,
                polarity: Polarity::Positive,
            },
        ] {
            route_guidance(&image(), &g, &seg, &d, &th).unwrap();
        }
        assert_eq!(seg.calls.load(AtomicOrdering::SeqCst), 3);
        assert_eq!(d.calls.load(AtomicOrdering::SeqCst), 0);
    }

    #[test]
    fn text_forwards_best_box() {
        let seg = CountingSegmenter::new();
        let d = detector(vec![det([0, 0, 2, 2], 0.5), det([1, 2, 6, 7], 0.9)]);
        let th = DetectionThresholds::default();
        route_guidance(&image(), &Guidance::Text("cat".into()), &seg, &d, &th).unwrap();
        assert_eq!(d.calls.load(AtomicOrdering::SeqCst), 1);
        let prompt = seg.last.lock().unwrap().clone().unwrap();
        assert_eq!(prompt, Prompt::from_box(BoundingBox::new(1, 2, 6, 7).unwrap()));
    }

    #[test]
    fn text_below_threshold_is_no_detection() {
        let seg = CountingSegmenter::new();
        let d = detector(vec![det([0, 0, 2, 2], 0.3), det([1, 1, 3, 3], 0.3)]);
        let th = DetectionThresholds::new(0.4, 0.25).unwrap();
        match route_guidance(&image(), &Guidance::Text("cat".into()), &seg, &d, &th) {
            Err(Error::NoDetection { caption }) => assert_eq!(caption, "cat"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(seg.calls.load(AtomicOrdering::SeqCst), 0);
    }

    #[test]
    fn transparent_detection_threshold_filter() {
        let d = detector(vec![det([0, 0, 2, 2], 0.35), det([1, 1, 3, 3], 0.45)]);
        let vocab = TransparencyVocabulary::new(["glass"]).unwrap();
        let th = DetectionThresholds::new(0.4, 0.25).unwrap();
        let out = detect_transparent(&image(), &vocab, &th, &d).unwrap();
        assert_eq!(out.items, vec![det([1, 1, 3, 3], 0.45)]);

        let empty = detect_transparent(&image(), &vocab, &th, &StubDetector::default()).unwrap();
        assert!(empty.is_empty());

        let vocab = TransparencyVocabulary::new(["glass", "web", "wine"]).unwrap();
        detect_transparent(&image(), &vocab, &th, &d).unwrap();
        assert_eq!(d.calls.load(AtomicOrdering::SeqCst), 4);
    }

    #[test]
    fn out_of_bounds_detection_is_protocol_violation() {
        let d = detector(vec![det([0, 0, 11, 2], 0.9)]);
        let vocab = TransparencyVocabulary::default();
        match detect_transparent(&image(), &vocab, &DetectionThresholds::default(), &d) {
            Err(Error::Remote {
                source: RemoteError::ProtocolViolation { field, .. },
                ..
            }) => assert_eq!(field, "detections[0].box"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn guidance_validation() {
        assert!(Guidance::Text("  ".into()).validate(4, 4).is_err());
        assert!(Guidance::Points(vec![PointPrompt::positive(4, 0)])
            .validate(4, 4)
            .is_err());
        assert!(Guidance::Points(vec![]).validate(4, 4).is_err());
        assert!(Guidance::Box(BoundingBox::new(0, 0, 5, 4).unwrap())
            .validate(4, 4)
            .is_err());
        assert!(Prompt::from_guidance(&Guidance::Text("cat".into())).is_err());
    }

    #[test]
    fn scribble_subsampling() {
        let stroke = BinaryMask::from_fn(40, 3, |_, y| y == 1).unwrap();
        let pts = scribble_points(&stroke, Polarity::Negative, MAX_SCRIBBLE_POINTS);
        // 40 pixels, stride ceil(40/16) = 3 → 14 points.
        assert_eq!(pts.len(), 14);
        assert_eq!(pts[0], PointPrompt::negative(0, 1));
        assert_eq!(pts[1], PointPrompt::negative(3, 1));
        let small = BinaryMask::from_fn(5, 1, |x, _| x < 3).unwrap();
        assert_eq!(scribble_points(&small, Polarity::Positive, 16).len(), 3);
    }

    #[test]
    fn thresholds_validate() {
        assert!(DetectionThresholds::new(0.0, 0.3).is_err());
        assert!(DetectionThresholds::new(0.4, 1.0).is_err());
        assert_eq!(DetectionThresholds::default().box_threshold(), 0.4);
    }
}
