//! The four standard matting errors: SAD, MSE, Grad and Conn.
//!
//! All four are accumulated in `f64` regardless of the matte scalar type, so a
//! single-precision prediction is scored with the same arithmetic as a
//! double-precision one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, AlphaMatte, BinaryMask, Label, Trimap};
use crate::scalar::Scalar;

/// Standard deviation of the Gaussian-derivative filter used by [`grad_error`].
pub const GRAD_SIGMA: f64 = 1.4;
/// Threshold step of the connectivity sweep used by [`conn_error`].
pub const CONN_STEP: f64 = 0.1;
/// Degradations below this distance count as fully connected.
const CONN_TOLERANCE: f64 = 0.15;

/// Which pixels contribute to a metric.
#[derive(Debug, Clone, Copy)]
pub enum EvalRegion<'a> {
    WholeImage,
    /// The unknown (0.5) region of an evaluation trimap.
    UnknownOf(&'a Trimap),
}

impl EvalRegion<'_> {
    /// Resolves the selector to a pixel mask for a `(width, height)` plane.
    pub fn mask(&self, dims: (usize, usize)) -> Result<BinaryMask> {
        match self {
            EvalRegion::WholeImage => BinaryMask::filled(dims.0, dims.1, true),
            EvalRegion::UnknownOf(t) => {
                ensure_same_dims(t.dims(), dims, "evaluation trimap")?;
                let m = t.region(Label::Unknown);
                if m.is_empty() {
                    return Err(Error::invalid("evaluation trimap has an empty unknown region"));
                }
                Ok(m)
            }
        }
    }
}

/// All four errors of one prediction over one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sad: f64,
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
    pub region_pixel_count: usize,
}

fn prepare<T: Scalar>(pred: &AlphaMatte<T>, gt: &AlphaMatte<T>, r: EvalRegion<'_>) -> Result<BinaryMask> {
    ensure_same_dims(pred.dims(), gt.dims(), "prediction vs ground truth")?;
    r.mask(pred.dims())
}

fn region_sum(mask: &BinaryMask, per_pixel: impl Fn(usize) -> f64) -> f64 {
    mask.bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| per_pixel(i))
        .sum()
}

fn to_f64<T: Scalar>(a: &AlphaMatte<T>) -> Vec<f64> {
    a.values().iter().map(|v| v.as_f64()).collect()
}

/// Sum of absolute differences over the region, divided by 1000.
pub fn sad<T: Scalar>(pred: &AlphaMatte<T>, gt: &AlphaMatte<T>, r: EvalRegion<'_>) -> Result<f64> {
    let mask = prepare(pred, gt, r)?;
    let (p, g) = (pred.values(), gt.values());
    Ok(region_sum(&mask, |i| (p[i].as_f64() - g[i].as_f64()).abs()) / 1000.0)
}

/// Mean squared error over the region, multiplied by 1000.
pub fn mse<T: Scalar>(pred: &AlphaMatte<T>, gt: &AlphaMatte<T>, r: EvalRegion<'_>) -> Result<f64> {
    let mask = prepare(pred, gt, r)?;
    let (p, g) = (pred.values(), gt.values());
    let sum = region_sum(&mask, |i| {
        let d = p[i].as_f64() - g[i].as_f64();
        d * d
    });
    Ok(1000.0 * sum / mask.count() as f64)
}

/// Squared difference of gradient magnitudes over the region, divided by 1000.
pub fn grad_error<T: Scalar>(pred: &AlphaMatte<T>, gt: &AlphaMatte<T>, r: EvalRegion<'_>) -> Result<f64> {
    let mask = prepare(pred, gt, r)?;
    let (w, h) = pred.dims();
    let gp = gradient_magnitude(&to_f64(pred), w, h, GRAD_SIGMA);
    let gg = gradient_magnitude(&to_f64(gt), w, h, GRAD_SIGMA);
    Ok(region_sum(&mask, |i| (gp[i] - gg[i]).powi(2)) / 1000.0)
}

/// Absolute difference of connectivity degradations over the region, divided by 1000.
pub fn conn_error<T: Scalar>(pred: &AlphaMatte<T>, gt: &AlphaMatte<T>, r: EvalRegion<'_>) -> Result<f64> {
    let mask = prepare(pred, gt, r)?;
    let (w, h) = pred.dims();
    let (p, g) = (to_f64(pred), to_f64(gt));
    let levels = connectivity_levels(&p, &g, w, h);
    let phi = |a: f64, l: f64| {
        let d = a - l;
        if d >= CONN_TOLERANCE {
            1.0 - d
        } else {
            1.0
        }
    };
    Ok(region_sum(&mask, |i| (phi(p[i], levels[i]) - phi(g[i], levels[i])).abs()) / 1000.0)
}

/// Computes all four errors at once.
pub fn evaluate<T: Scalar>(pred: &AlphaMatte<T>, gt: &AlphaMatte<T>, r: EvalRegion<'_>) -> Result<MetricsReport> {
    let mask = prepare(pred, gt, r)?;
    Ok(MetricsReport {
        sad: sad(pred, gt, r)?,
        mse: mse(pred, gt, r)?,
        grad: grad_error(pred, gt, r)?,
        conn: conn_error(pred, gt, r)?,
        region_pixel_count: mask.count(),
    })
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn dgauss(x: f64, sigma: f64) -> f64 {
    -x * gauss(x, sigma) / (sigma * sigma)
}

/// Half-width of the filter: the radius at which the Gaussian falls to 1% of
/// its normalised peak.
pub fn gaussian_half_size(sigma: f64) -> usize {
    let r = sigma * (-2.0 * ((2.0 * std::f64::consts::PI).sqrt() * sigma * 0.01).ln()).sqrt();
    r.ceil() as usize
}

/// The smoothing and derivative taps of the separable filter, each scaled so
/// that their outer product has unit Frobenius norm.
pub fn gaussian_derivative_taps(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let half = gaussian_half_size(sigma) as i64;
    let offsets = -half..=half;
    let mut g: Vec<f64> = offsets.clone().map(|i| gauss(i as f64, sigma)).collect();
    let mut dg: Vec<f64> = offsets.map(|i| dgauss(i as f64, sigma)).collect();
    for taps in [&mut g, &mut dg] {
        let norm = taps.iter().map(|v| v * v).sum::<f64>().sqrt();
        taps.iter_mut().for_each(|v| *v /= norm);
    }
    (g, dg)
}

/// Half-sample symmetric index reflection (`d c b a | a b c d | d c b a`).
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// 1-D convolution along one axis with reflected borders.
fn convolve_axis(src: &[f64], w: usize, h: usize, taps: &[f64], along_x: bool) -> Vec<f64> {
    let half = (taps.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &tap) in taps.iter().enumerate() {
                let shift = k as i64 - half;
                let idx = if along_x {
                    y * w + reflect(x as i64 - shift, w)
                } else {
                    reflect(y as i64 - shift, h) * w + x
                };
                acc += tap * src[idx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Per-pixel gradient magnitude from Gaussian-derivative filtering.
pub fn gradient_magnitude(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let (g, dg) = gaussian_derivative_taps(sigma);
    let gx = convolve_axis(&convolve_axis(values, w, h, &dg, true), w, h, &g, false);
    let gy = convolve_axis(&convolve_axis(values, w, h, &g, true), w, h, &dg, false);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect()
}

/// Largest 4-connected component of `set`; ties keep the component whose first
/// pixel comes earliest in row-major order.
fn largest_component(set: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut label = vec![0usize; w * h];
    let (mut best, mut best_size, mut next) = (0usize, 0usize, 0usize);
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !set[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if set[j] && label[j] == 0 {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if y > 0 {
                visit(i - w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if size > best_size {
            best = next;
            best_size = size;
        }
    }
    label.iter().map(|&l| best != 0 && l == best).collect()
}

/// The per-pixel level at which each pixel first drops out of the largest
/// jointly thresholded component (1 if it never does).
fn connectivity_levels(p: &[f64], g: &[f64], w: usize, h: usize) -> Vec<f64> {
    let steps = (1.0 / CONN_STEP).round() as usize;
    let mut level_of: Vec<Option<f64>> = vec![None; w * h];
    // Levels 0.1 ..= 0.9: the full-alpha level adds nothing beyond the top step.
    for k in 1..steps {
        // Division keeps the levels exact decimals (3 × 0.1 would overshoot 0.3).
        let level = k as f64 / steps as f64;
        let previous = (k - 1) as f64 / steps as f64;
        let joint: Vec<bool> = p.iter().zip(g).map(|(&a, &b)| a >= level && b >= level).collect();
        let omega = largest_component(&joint, w, h);
        for (slot, inside) in level_of.iter_mut().zip(omega) {
            if slot.is_none() && !inside {
                *slot = Some(previous);
            }
        }
    }
    level_of.into_iter().map(|l| l.unwrap_or(1.0)).collect()
}
