//! Pseudo-trimap synthesis from an instance mask.
//!
//! Step one turns the mask into a basic trimap by erosion/dilation (interior
//! foreground, band unknown, rest background). Step two corrects for
//! transparency, either from detector boxes or from the user's one-click
//! "this object is transparent" decision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{dilate, erode, MorphParams};
use crate::raster::{ensure_same_dims, BinaryMask, Label, Trimap};

/// Axis-aligned box, half-open on the max side: covers `x0..x1` × `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::invalid(format!("degenerate box [{x0}, {y0}, {x1}, {y1}]")));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        (self.x1 as usize) <= width && (self.y1 as usize) <= height
    }

    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if !self.fits(width, height) {
            return Err(Error::invalid(format!(
                "box [{}, {}, {}, {}] exceeds {width}x{height} image",
                self.x0, self.y0, self.x1, self.y1
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0 as usize..self.x1 as usize).contains(&x) && (self.y0 as usize..self.y1 as usize).contains(&y)
    }

    pub fn area(&self) -> usize {
        ((self.x1 - self.x0) as usize) * ((self.y1 - self.y0) as usize)
    }

    /// Pixel nearest the box center, always inside the box.
    pub fn center(&self) -> (usize, usize) {
        (
            ((self.x0 + self.x1 - 1) / 2) as usize,
            ((self.y0 + self.y1 - 1) / 2) as usize,
        )
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// Tight box around the set pixels of `m`, if any.
    pub fn enclosing(m: &BinaryMask) -> Option<Self> {
        let mut it = m.iter_set();
        let (x, y) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
        for (x, y) in it {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Some(Self {
            x0: x0 as u32,
            y0: y0 as u32,
            x1: x1 as u32 + 1,
            y1: y1 as u32 + 1,
        })
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(a: [u32; 4]) -> Result<Self> {
        BoundingBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub items: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(items: Vec<Detection>) -> Result<Self> {
        for d in &items {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::invalid(format!("detection score {} outside [0,1]", d.score)));
            }
        }
        Ok(Self { items })
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        self.items.iter().try_for_each(|d| d.bbox.check_fits(width, height))
    }
}

/// How step two of trimap synthesis treats transparency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TransparencyDecision {
    /// Detector-driven correction with the given detections.
    Auto { detections: DetectionSet },
    /// User marked the object transparent: no definite foreground remains.
    UserTransparent,
    /// User marked the object opaque: the basic trimap is final.
    UserOpaque,
}

impl TransparencyDecision {
    pub fn mode(&self) -> TransparencyMode {
        match self {
            TransparencyDecision::Auto { .. } => TransparencyMode::Auto,
            TransparencyDecision::UserTransparent => TransparencyMode::UserTransparent,
            TransparencyDecision::UserOpaque => TransparencyMode::UserOpaque,
        }
    }
}

/// Payload-free view of [`TransparencyDecision`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransparencyMode {
    Auto,
    UserTransparent,
    UserOpaque,
}

/// The basic trimap: foreground on the eroded mask, unknown on the dilated
/// band outside it, background elsewhere.
pub fn basic_trimap(m: &BinaryMask, p: &MorphParams) -> Trimap {
    let eroded = erode(m, p);
    let dilated = dilate(m, p);
    trimap_from_bands(&eroded, &dilated)
}

fn trimap_from_bands(eroded: &BinaryMask, dilated: &BinaryMask) -> Trimap {
    let labels = eroded
        .bits()
        .iter()
        .zip(dilated.bits())
        .map(|(&e, &d)| match (e, d) {
            (true, _) => Label::Foreground,
            (false, true) => Label::Unknown,
            (false, false) => Label::Background,
        })
        .collect();
    Trimap::new(eroded.width(), eroded.height(), labels).expect("dimensions preserved")
}

/// Whether any pixel of `b` is set in `m`. The box must fit the mask.
pub fn box_touches(b: &BoundingBox, m: &BinaryMask) -> bool {
    (b.y0 as usize..b.y1 as usize).any(|y| (b.x0 as usize..b.x1 as usize).any(|x| m.get(x, y)))
}

/// Overrides every pixel inside an applied detection box to unknown.
///
/// With `require_mask_overlap`, boxes that do not touch `dilated_mask` are
/// skipped. Empty detections return the input unchanged.
pub fn detection_correction(
    basic: &Trimap,
    dets: &DetectionSet,
    require_mask_overlap: bool,
    dilated_mask: &BinaryMask,
) -> Result<Trimap> {
    let (w, h) = basic.dims();
    dets.check_fits(w, h)?;
    if require_mask_overlap {
        ensure_same_dims(basic.dims(), dilated_mask.dims(), "trimap/dilated mask")?;
    }
    let mut out = basic.clone();
    for det in &dets.items {
        let b = det.bbox;
        if require_mask_overlap && !box_touches(&b, dilated_mask) {
            continue;
        }
        for y in b.y0 as usize..b.y1 as usize {
            for x in b.x0 as usize..b.x1 as usize {
                out.set(x, y, Label::Unknown);
            }
        }
    }
    Ok(out)
}

/// One-click transparent correction: everything that is not background becomes unknown.
pub fn user_correction(basic: &Trimap) -> Trimap {
    let labels = basic
        .labels()
        .iter()
        .map(|&l| match l {
            Label::Background => Label::Background,
            Label::Unknown | Label::Foreground => Label::Unknown,
        })
        .collect();
    Trimap::new(basic.width(), basic.height(), labels).expect("dimensions preserved")
}

/// Full two-step synthesis.
pub fn pseudo_trimap(
    m: &BinaryMask,
    decision: &TransparencyDecision,
    p: &MorphParams,
    require_mask_overlap: bool,
) -> Result<Trimap> {
    let eroded = erode(m, p);
    let dilated = dilate(m, p);
    let basic = trimap_from_bands(&eroded, &dilated);
    match decision {
        TransparencyDecision::Auto { detections } => {
            detection_correction(&basic, detections, require_mask_overlap, &dilated)
        }
        TransparencyDecision::UserTransparent => Ok(user_correction(&basic)),
        TransparencyDecision::UserOpaque => Ok(basic),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(b: [u32; 4], score: f64) -> Detection {
        Detection {
            bbox: BoundingBox::try_from(b).unwrap(),
            label: "glass".into(),
            score,
        }
    }

    fn centered_square() -> BinaryMask {
        BinaryMask::from_fn(9, 9, |x, y| (2..7).contains(&x) && (2..7).contains(&y)).unwrap()
    }

    fn expected_square_trimap() -> Trimap {
        Trimap::from_fn(9, 9, |x, y| {
            if (3..6).contains(&x) && (3..6).contains(&y) {
                Label::Foreground
            } else if (1..8).contains(&x) && (1..8).contains(&y) {
                Label::Unknown
            } else {
                Label::Background
            }
        })
        .unwrap()
    }

    #[test]
    fn basic_trimap_of_square() {
        let t = basic_trimap(&centered_square(), &MorphParams::new(3, 1).unwrap());
        assert_eq!(t, expected_square_trimap());
    }

    #[test]
    fn basic_trimap_extremes() {
        let p = MorphParams::new(7, 3).unwrap();
        let empty = basic_trimap(&BinaryMask::filled(6, 6, false).unwrap(), &p);
        assert_eq!(empty.count(Label::Background), 36);
        let full = basic_trimap(&BinaryMask::filled(6, 6, true).unwrap(), &p);
        assert_eq!(full.count(Label::Background), 0);
        assert_eq!(full.count(Label::Foreground), 36);
    }

    #[test]
    fn detection_correction_cases() {
        let t = expected_square_trimap();
        let md = BinaryMask::filled(9, 9, false).unwrap();
        assert_eq!(
            detection_correction(&t, &DetectionSet::default(), false, &md).unwrap(),
            t
        );

        let whole = DetectionSet::new(vec![det([0, 0, 9, 9], 0.9)]).unwrap();
        let out = detection_correction(&t, &whole, false, &md).unwrap();
        assert_eq!(out.count(Label::Unknown), 81);

        // Disjoint from the (empty) dilated mask → skipped when filtering.
        assert_eq!(detection_correction(&t, &whole, true, &md).unwrap(), t);

        let oob = DetectionSet::new(vec![det([0, 0, 10, 9], 0.9)]).unwrap();
        assert!(detection_correction(&t, &oob, false, &md).is_err());
    }

    #[test]
    fn detection_correction_left_half() {
        let t = Trimap::from_fn(8, 8, |x, y| match (x + y) % 3 {
            0 => Label::Background,
            1 => Label::Unknown,
            _ => Label::Foreground,
        })
        .unwrap();
        let md = BinaryMask::filled(8, 8, true).unwrap();
        let dets = DetectionSet::new(vec![det([0, 0, 4, 8], 0.5)]).unwrap();
        let out = detection_correction(&t, &dets, true, &md).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let want = if x < 4 { Label::Unknown } else { t.get(x, y) };
                assert_eq!(out.get(x, y), want);
            }
        }
    }

    #[test]
    fn user_correction_bands() {
        let t = Trimap::from_fn(3, 3, |x, _| [Label::Foreground, Label::Unknown, Label::Background][x]).unwrap();
        let out = user_correction(&t);
        let want = Trimap::from_fn(3, 3, |x, _| [Label::Unknown, Label::Unknown, Label::Background][x]).unwrap();
        assert_eq!(out, want);
        assert_eq!(user_correction(&out), out);
        let zeros = Trimap::filled(2, 2, Label::Background).unwrap();
        assert_eq!(user_correction(&zeros), zeros);
    }

    #[test]
    fn pseudo_trimap_dispatch() {
        let m = centered_square();
        let p = MorphParams::new(3, 1).unwrap();
        let basic = basic_trimap(&m, &p);
        assert_eq!(
            pseudo_trimap(&m, &TransparencyDecision::UserOpaque, &p, false).unwrap(),
            basic
        );
        let tr = pseudo_trimap(&m, &TransparencyDecision::UserTransparent, &p, false).unwrap();
        assert_eq!(tr.count(Label::Foreground), 0);

        let auto = TransparencyDecision::Auto {
            detections: DetectionSet::new(vec![det([2, 2, 7, 7], 0.8)]).unwrap(),
        };
        let out = pseudo_trimap(&m, &auto, &p, false).unwrap();
        let want = Trimap::from_fn(9, 9, |x, y| {
            if (2..7).contains(&x) && (2..7).contains(&y) {
                Label::Unknown
            } else {
                basic.get(x, y)
            }
        })
        .unwrap();
        assert_eq!(out, want);
    }

    #[test]
    fn box_serde_and_helpers() {
        let b: BoundingBox = serde_json::from_str("[1,2,5,6]").unwrap();
        assert_eq!(b.center(), (2, 3));
        assert_eq!(b.area(), 16);
        assert!(serde_json::from_str::<BoundingBox>("[5,2,5,6]").is_err());
        let m = BinaryMask::from_fn(6, 6, |x, y| x == 2 && (1..4).contains(&y)).unwrap();
        assert_eq!(BoundingBox::enclosing(&m), Some(BoundingBox::new(2, 1, 3, 4).unwrap()));
    }
}
