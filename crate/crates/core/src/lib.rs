//! Interactive natural-image matting: cheap guidance (points, boxes,
//! scribbles, text) becomes an instance mask, the mask becomes a pseudo-trimap
//! through morphology plus transparency correction, and a trimap-based matting
//! backend turns that into an alpha matte.
//!
//! Numeric types are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the common double-precision choice.

pub mod codec;
pub mod error;
pub mod eval;
pub mod matting;
pub mod morphology;
pub mod perception;
pub mod pipeline;
pub mod raster;
pub mod scalar;
pub mod trimap;

pub use error::{Error, RemoteError, Result};
pub use morphology::{dilate, erode, MorphParams};
pub use raster::{BinaryMask, Label, Plane, Trimap};
pub use scalar::Scalar;
pub use trimap::{BoundingBox, Detection, DetectionSet, TransparencyDecision, TransparencyMode};

/// Double-precision RGB image.
pub type Image = raster::RasterImage<f64>;
/// Double-precision alpha matte.
pub type Alpha = raster::AlphaMatte<f64>;
/// Single-precision RGB image.
pub type Image32 = raster::RasterImage<f32>;
/// Single-precision alpha matte.
pub type Alpha32 = raster::AlphaMatte<f32>;
