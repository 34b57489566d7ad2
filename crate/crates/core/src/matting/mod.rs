//! Trimap-constrained alpha estimation.
//!
//! Every matte leaving [`matte`] satisfies the trimap prior: exactly 1 on the
//! foreground region, exactly 0 on the background region, and a value in
//! `[0, 1]` on the unknown band, whatever the backend returned.

mod cg;
mod closed_form;
mod laplacian;

use serde::{Deserialize, Serialize};
use url::Url;

pub use cg::{conjugate_gradient, CgOutcome, LinearOperator};
pub use closed_form::{closed_form_matte, ClosedFormBackend, SolverParams};
pub use laplacian::MattingLaplacian;

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, AlphaMatte, Label, Plane, RasterImage, Trimap};
use crate::scalar::Scalar;

/// A trimap-based matting model.
pub trait MattingBackend<T: Scalar>: Send + Sync {
    /// Identity reported in errors.
    fn name(&self) -> String;

    /// Raw prediction; values outside `[0, 1]` are tolerated and clamped by [`matte`].
    fn predict(&self, image: &RasterImage<T>, trimap: &Trimap) -> Result<Plane<T>>;
}

/// Which matting model a pipeline uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MattingBackendRef {
    #[default]
    BuiltinClosedForm,
    Remote {
        endpoint: Url,
    },
}

impl MattingBackendRef {
    pub fn remote(endpoint: &str) -> Result<Self> {
        let endpoint = Url::parse(endpoint).map_err(|e| Error::invalid(format!("bad endpoint `{endpoint}`: {e}")))?;
        Ok(MattingBackendRef::Remote { endpoint })
    }
}

/// Forces the trimap prior onto a raw prediction.
pub fn enforce_prior<T: Scalar>(raw: &Plane<T>, t: &Trimap) -> Result<AlphaMatte<T>> {
    ensure_same_dims(raw.dims(), t.dims(), "raw alpha/trimap")?;
    let values = raw
        .values()
        .iter()
        .zip(t.labels())
        .map(|(&v, &l)| match l {
            Label::Foreground => T::one(),
            Label::Background => T::zero(),
            Label::Unknown => v.clamp_unit(),
        })
        .collect();
    AlphaMatte::new(t.width(), t.height(), values)
}

/// Runs `backend` and post-composes [`enforce_prior`].
pub fn matte<T: Scalar, B: MattingBackend<T> + ?Sized>(
    image: &RasterImage<T>,
    trimap: &Trimap,
    backend: &B,
) -> Result<AlphaMatte<T>> {
    ensure_same_dims(image.dims(), trimap.dims(), "image/trimap")?;
    let raw = backend.predict(image, trimap)?;
    if raw.dims() != trimap.dims() {
        return Err(Error::invalid(format!(
            "backend `{}` returned {}x{} alpha for {}x{} trimap",
            backend.name(),
            raw.width(),
            raw.height(),
            trimap.width(),
            trimap.height()
        )));
    }
    enforce_prior(&raw, trimap)
}
