//! Seeded region growing, the builtin stand-in for a promptable segmenter.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};
use crate::scalar::Scalar;
use crate::trimap::BoundingBox;

use super::{Polarity, Prompt, Segmenter};

pub const DEFAULT_COLOR_TOLERANCE: f64 = 0.08;

#[derive(Debug, Clone)]
pub struct RegionGrowSegmenter {
    pub color_tolerance: f64,
}

impl Default for RegionGrowSegmenter {
    fn default() -> Self {
        Self {
            color_tolerance: DEFAULT_COLOR_TOLERANCE,
        }
    }
}

impl<T: Scalar> Segmenter<T> for RegionGrowSegmenter {
    fn name(&self) -> String {
        "builtin-region-grow".into()
    }

    fn segment(&self, image: &RasterImage<T>, prompt: &Prompt) -> Result<BinaryMask> {
        region_grow_segment(image, prompt, self.color_tolerance)
    }
}

struct SeedGroup {
    seeds: Vec<(usize, usize)>,
    clip: Option<BoundingBox>,
}

/// Grows one region per positive seed group and removes the regions grown
/// from negative seeds.
///
/// Seed groups: each point on its own, all pixels of a scribble together, and
/// the center of each box (growth then stays inside that box). A pixel joins a
/// region when its Euclidean color distance to the region's running mean is at
/// most `color_tolerance`. Neighbors are 4-connected and visited FIFO in
/// up/left/right/down order, so results are deterministic.
pub fn region_grow_segment<T: Scalar>(
    image: &RasterImage<T>,
    prompt: &Prompt,
    color_tolerance: f64,
) -> Result<BinaryMask> {
    let (w, h) = image.dims();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for p in &prompt.points {
        if p.x as usize >= w || p.y as usize >= h {
            return Err(Error::InvalidGuidance(format!(
                "point ({}, {}) outside image",
                p.x, p.y
            )));
        }
        let group = SeedGroup {
            seeds: vec![(p.x as usize, p.y as usize)],
            clip: None,
        };
        if p.polarity.is_positive() {
            positive.push(group);
        } else {
            negative.push(group);
        }
    }
    for (stroke, polarity) in &prompt.scribbles {
        if stroke.dims() != image.dims() {
            return Err(Error::InvalidGuidance("scribble dimensions differ from image".into()));
        }
        let group = SeedGroup {
            seeds: stroke.iter_set().collect(),
            clip: None,
        };
        if group.seeds.is_empty() {
            continue;
        }
        match polarity {
            Polarity::Positive => positive.push(group),
            Polarity::Negative => negative.push(group),
        }
    }
    for b in &prompt.boxes {
        b.check_fits(w, h).map_err(|e| Error::InvalidGuidance(e.to_string()))?;
        positive.push(SeedGroup {
            seeds: vec![b.center()],
            clip: Some(*b),
        });
    }
    if positive.is_empty() {
        return Err(Error::InvalidGuidance("no positive seeds".into()));
    }

    let tol = T::of(color_tolerance);
    let mut mask = BinaryMask::filled(w, h, false)?;
    for g in &positive {
        mask = mask.union(&grow(image, g, tol))?;
    }
    for g in &negative {
        mask = mask.difference(&grow(image, g, tol))?;
    }
    Ok(mask)
}

fn grow<T: Scalar>(image: &RasterImage<T>, group: &SeedGroup, tol: T) -> BinaryMask {
    let (w, h) = image.dims();
    let mut region = BinaryMask::filled(w, h, false).expect("nonzero dims");
    let mut queue = VecDeque::new();
    let mut mean = [T::zero(); 3];
    let mut n = 0usize;
    let admit = |x: usize,
                 y: usize,
                 region: &mut BinaryMask,
                 queue: &mut VecDeque<(usize, usize)>,
                 mean: &mut [T; 3],
                 n: &mut usize| {
        region.set(x, y, true);
        queue.push_back((x, y));
        *n += 1;
        // Incremental mean: unchanged bit-for-bit when the new color equals it.
        let inv = T::one() / T::of(*n as f64);
        let c = image.get(x, y);
        for k in 0..3 {
            mean[k] += (c[k] - mean[k]) * inv;
        }
    };
    for &(x, y) in &group.seeds {
        if !region.get(x, y) {
            admit(x, y, &mut region, &mut queue, &mut mean, &mut n);
        }
    }
    let inside = |x: usize, y: usize| group.clip.is_none_or(|b| b.contains(x, y));
    let tol2 = tol * tol;
    while let Some((x, y)) = queue.pop_front() {
        let neighbors = [
            (y > 0).then(|| (x, y - 1)),
            (x > 0).then(|| (x - 1, y)),
            (x + 1 < w).then(|| (x + 1, y)),
            (y + 1 < h).then(|| (x, y + 1)),
        ];
        for (nx, ny) in neighbors.into_iter().flatten() {
            if region.get(nx, ny) || !inside(nx, ny) {
                continue;
            }
            let c = image.get(nx, ny);
            let d2: T = (0..3).map(|k| (c[k] - mean[k]) * (c[k] - mean[k])).sum();
            if d2 <= tol2 {
                admit(nx, ny, &mut region, &mut queue, &mut mean, &mut n);
            }
        }
    }
    region
}
