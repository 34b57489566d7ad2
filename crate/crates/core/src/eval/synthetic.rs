//! Analytic fixtures for exercising the evaluation harness offline.

use crate::error::Result;
use crate::raster::{composite, AlphaMatte, RasterImage};
use crate::scalar::Scalar;

/// Number of distinct interior-transparent fixtures [`interior_transparent`] cycles through.
pub const INTERIOR_TRANSPARENT_VARIANTS: usize = 20;

/// A glass-like object composited analytically: a one-pixel opaque rim around
/// a low-alpha interior, over a smooth background. Returns `(image, alpha)`.
///
/// The index varies object size, position, interior alpha (0.10–0.33) and colors
/// deterministically, so the set of fixtures is reproducible without an RNG.
pub fn interior_transparent<T: Scalar>(index: usize) -> Result<(RasterImage<T>, AlphaMatte<T>)> {
    let i = index % INTERIOR_TRANSPARENT_VARIANTS;
    let (w, h) = (48usize, 44usize);
    let size = 24 + (i % 5) * 2;
    let x0 = 6 + (i % 3) * 3;
    let y0 = 5 + (i % 4) * 2;
    let interior = 0.10 + 0.012 * i as f64;
    let alpha = AlphaMatte::from_fn(w, h, |x, y| {
        let inside = (x0..x0 + size).contains(&x) && (y0..y0 + size).contains(&y);
        let rim = x == x0 || y == y0 || x == x0 + size - 1 || y == y0 + size - 1;
        T::of(match (inside, rim) {
            (false, _) => 0.0,
            (true, true) => 1.0,
            (true, false) => interior,
        })
    })?;
    let tint = (i % 7) as f64 / 7.0;
    let fg = RasterImage::filled(w, h, [T::of(0.85), T::of(0.9 - 0.3 * tint), T::of(0.75 + 0.2 * tint)])?;
    let bg = RasterImage::from_fn(w, h, |x, y| {
        let u = x as f64 / (w - 1) as f64;
        let v = y as f64 / (h - 1) as f64;
        [
            T::of(0.1 + 0.3 * u),
            T::of(0.2 + 0.25 * v),
            T::of(0.35 - 0.2 * u * v + 0.1 * tint),
        ]
    })?;
    let image = composite(&fg, &bg, &alpha)?;
    Ok((image, alpha))
}
