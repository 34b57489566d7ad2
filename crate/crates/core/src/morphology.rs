//! Binary erosion and dilation with a square all-ones structuring element.
//!
//! For kernel side `k` the offsets are `-floor((k-1)/2) ..= ceil((k-1)/2)` on
//! both axes, so even kernels lean one pixel towards +x/+y. Erosion treats
//! out-of-bounds neighbors as foreground and dilation as background, which
//! keeps frame-touching objects from shrinking at the border.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

pub const MIN_KERNEL_SIZE: u32 = 1;
pub const MAX_KERNEL_SIZE: u32 = 100;
pub const DEFAULT_KERNEL_SIZE: u32 = 15;
pub const DEFAULT_ITERATIONS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMorphParams", into = "RawMorphParams")]
pub struct MorphParams {
    kernel_size: u32,
    iterations: u32,
}

#[derive(Serialize, Deserialize)]
struct RawMorphParams {
    kernel_size: u32,
    iterations: u32,
}

impl TryFrom<RawMorphParams> for MorphParams {
    type Error = Error;

    fn try_from(raw: RawMorphParams) -> Result<Self> {
        MorphParams::new(raw.kernel_size, raw.iterations)
    }
}

impl From<MorphParams> for RawMorphParams {
    fn from(p: MorphParams) -> Self {
        RawMorphParams {
            kernel_size: p.kernel_size,
            iterations: p.iterations,
        }
    }
}

impl MorphParams {
    pub fn new(kernel_size: u32, iterations: u32) -> Result<Self> {
        if !(MIN_KERNEL_SIZE..=MAX_KERNEL_SIZE).contains(&kernel_size) {
            return Err(Error::invalid(format!(
                "kernel_size {kernel_size} outside [{MIN_KERNEL_SIZE}, {MAX_KERNEL_SIZE}]"
            )));
        }
        if iterations < 1 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        Ok(Self {
            kernel_size,
            iterations,
        })
    }

    pub fn kernel_size(&self) -> u32 {
        self.kernel_size
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    /// `(lo, hi)` such that the offset set is `-lo ..= hi`.
    pub fn offsets(&self) -> (usize, usize) {
        let k = self.kernel_size as usize;
        let lo = (k - 1) / 2;
        (lo, k - 1 - lo)
    }
}

impl Default for MorphParams {
    fn default() -> Self {
        Self {
            kernel_size: DEFAULT_KERNEL_SIZE,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

pub fn erode(m: &BinaryMask, p: &MorphParams) -> BinaryMask {
    iterate(m, p, true)
}

pub fn dilate(m: &BinaryMask, p: &MorphParams) -> BinaryMask {
    iterate(m, p, false)
}

fn iterate(m: &BinaryMask, p: &MorphParams, erosion: bool) -> BinaryMask {
    let (lo, hi) = p.offsets();
    if lo == 0 && hi == 0 {
        return m.clone();
    }
    let (w, h) = m.dims();
    let mut bits = m.bits().to_vec();
    let mut scratch = vec![false; bits.len()];
    for _ in 0..p.iterations() {
        // Rows into scratch, then columns back into bits.
        for y in 0..h {
            let row = &bits[y * w..(y + 1) * w];
            let out = &mut scratch[y * w..(y + 1) * w];
            pass_1d(w, |i| row[i], |i, v| out[i] = v, lo, hi, erosion);
        }
        for x in 0..w {
            let src = &scratch;
            let dst = &mut bits;
            pass_1d(h, |i| src[i * w + x], |i, v| dst[i * w + x] = v, lo, hi, erosion);
        }
    }
    BinaryMask::new(w, h, bits).expect("dimensions preserved")
}

/// One-dimensional min (erosion) or max (dilation) over the window `[i-lo, i+hi]`.
///
/// Tracks the number of "breaking" samples in the window: false samples for
/// erosion, true samples for dilation. Out-of-range samples never break.
fn pass_1d(
    n: usize,
    get: impl Fn(usize) -> bool,
    mut put: impl FnMut(usize, bool),
    lo: usize,
    hi: usize,
    erosion: bool,
) {
    let breaks = |i: usize| if erosion { !get(i) } else { get(i) };
    let mut count = 0usize;
    for j in 0..hi.min(n.saturating_sub(1)) + 1 {
        if j < n && breaks(j) {
            count += 1;
        }
    }
    for i in 0..n {
        // Window currently covers [i - lo, i + hi] ∩ [0, n).
        let hit = count > 0;
        put(i, if erosion { !hit } else { hit });
        let enter = i + hi + 1;
        if enter < n && breaks(enter) {
            count += 1;
        }
        if i >= lo {
            let leave = i - lo;
            if breaks(leave) {
                count -= 1;
            }
        }
    }
}
