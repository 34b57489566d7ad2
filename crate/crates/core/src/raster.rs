//! Image, mask, trimap and alpha value models.
//!
//! All planes are row-major with `index = y * width + x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "{what} must have nonzero dimensions, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::invalid(format!(
            "{what} holds {len} values, expected {width}x{height}"
        )));
    }
    Ok(())
}

/// Fails unless both sides have identical `(width, height)`.
pub fn ensure_same_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "dimension mismatch for {what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Three-channel color raster with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage<T> {
    width: usize,
    height: usize,
    pixels: Vec<[T; 3]>,
}

impl<T: Scalar> RasterImage<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<[T; 3]>) -> Result<Self> {
        check_dims(width, height, pixels.len(), "image")?;
        if let Some(i) = pixels
            .iter()
            .position(|p| p.iter().any(|&c| !(c >= T::zero() && c <= T::one())))
        {
            return Err(Error::invalid(format!("image channel out of [0,1] at index {i}")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: [T; 3]) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; 3] {
        self.pixels[y * self.width + x]
    }
}

impl<T> RasterImage<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[T; 3]] {
        &self.pixels
    }
}

/// Boolean instance mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len(), "mask")?;
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixelwise implication `self ⇒ other`. Dimensions must agree.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        ensure_same_dims(self.dims(), other.dims(), "mask union")?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect(),
        })
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        ensure_same_dims(self.dims(), other.dims(), "mask difference")?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect(),
        })
    }

    /// Iterates `(x, y)` of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }
}

/// Trimap region label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Background,
    Unknown,
    Foreground,
}

impl Label {
    /// Numeric value of the label: 0, 0.5 or 1.
    pub fn value<T: Scalar>(self) -> T {
        match self {
            Label::Background => T::zero(),
            Label::Unknown => T::half(),
            Label::Foreground => T::one(),
        }
    }

    /// Exact inverse of [`Label::value`]; any other value is rejected.
    pub fn from_value<T: Scalar>(v: T) -> Option<Label> {
        if v == T::zero() {
            Some(Label::Background)
        } else if v == T::half() {
            Some(Label::Unknown)
        } else if v == T::one() {
            Some(Label::Foreground)
        } else {
            None
        }
    }

    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }
}

/// Three-valued hint map. Labels are an enum, so no intermediate values can exist.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trimap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl Trimap {
    pub fn new(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        check_dims(width, height, labels.len(), "trimap")?;
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: Label) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Label) -> Result<Self> {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self::new(width, height, labels)
    }

    /// Builds a trimap from numeric values, each of which must be exactly 0, 0.5 or 1.
    pub fn from_values<T: Scalar>(width: usize, height: usize, values: &[T]) -> Result<Self> {
        let labels = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                Label::from_value(v)
                    .ok_or_else(|| Error::invalid(format!("trimap value {v:?} at index {i} not in {{0, 0.5, 1}}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: Label) {
        self.labels[y * self.width + x] = label;
    }

    /// Mask of pixels carrying `label`.
    pub fn region(&self, label: Label) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn values<T: Scalar>(&self) -> Vec<T> {
        self.labels.iter().map(|l| l.value()).collect()
    }
}

/// Unconstrained real plane: raw backend predictions, gradient maps and similar.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        check_dims(width, height, values.len(), "plane")?;
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }
}

impl<T> Plane<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Per-pixel opacity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatte<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> AlphaMatte<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        check_dims(width, height, values.len(), "alpha matte")?;
        if let Some(i) = values.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::invalid(format!(
                "alpha value {:?} at index {i} outside [0,1]",
                values[i]
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    /// Clamps every value of `raw` into `[0, 1]` (NaN becomes 0).
    pub fn clamped(raw: &Plane<T>) -> Self {
        Self {
            width: raw.width,
            height: raw.height,
            values: raw.values.iter().map(|v| v.clamp_unit()).collect(),
        }
    }

    /// Alpha equal to the trimap's label values.
    pub fn from_trimap(t: &Trimap) -> Self {
        Self {
            width: t.width,
            height: t.height,
            values: t.values(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn to_plane(&self) -> Plane<T> {
        Plane {
            width: self.width,
            height: self.height,
            values: self.values.clone(),
        }
    }
}

impl<T> AlphaMatte<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Alpha compositing `a·fg + (1 − a)·bg`, per channel.
pub fn composite<T: Scalar>(fg: &RasterImage<T>, bg: &RasterImage<T>, a: &AlphaMatte<T>) -> Result<RasterImage<T>> {
    ensure_same_dims(fg.dims(), bg.dims(), "composite foreground/background")?;
    ensure_same_dims(fg.dims(), a.dims(), "composite foreground/alpha")?;
    let pixels = fg
        .pixels
        .iter()
        .zip(&bg.pixels)
        .zip(&a.values)
        .map(|((f, b), &a)| {
            let mut out = [T::zero(); 3];
            for c in 0..3 {
                // Clamp guards against one-ulp excursions from the blend.
                out[c] = (a * f[c] + (T::one() - a) * b[c]).clamp_unit();
            }
            out
        })
        .collect();
    Ok(RasterImage {
        width: fg.width,
        height: fg.height,
        pixels,
    })
}

/// Gray/white checkerboard used as a compositing backdrop.
pub fn checkerboard<T: Scalar>(width: usize, height: usize, cell: usize) -> Result<RasterImage<T>> {
    let cell = cell.max(1);
    let light = T::of(0.8);
    let dark = T::of(0.6);
    RasterImage::from_fn(width, height, |x, y| {
        let v = if (x / cell + y / cell).is_multiple_of(2) {
            light
        } else {
            dark
        };
        [v; 3]
    })
}
