//! Reference matting backend: closed-form matting on the full pixel grid.
//!
//! Solves `(L + λD) α = λ D b`, where `L` is the matting Laplacian, `D` the
//! indicator of known trimap pixels and `b` their trimap values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, AlphaMatte, Label, Plane, RasterImage, Trimap};
use crate::scalar::Scalar;

use super::cg::{conjugate_gradient, LinearOperator};
use super::laplacian::MattingLaplacian;
use super::MattingBackend;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub window_radius: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            window_radius: 1,
            epsilon: 1e-7,
            lambda: 100.0,
            cg_tolerance: 1e-6,
            cg_max_iterations: 2000,
        }
    }
}

impl SolverParams {
    // Negated comparisons so that NaN parameters are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(self.cg_tolerance > 0.0 && self.cg_tolerance < 1.0) {
            return Err(Error::invalid("cg_tolerance must lie in (0, 1)"));
        }
        if self.cg_max_iterations < 1 {
            return Err(Error::invalid("cg_max_iterations must be at least 1"));
        }
        Ok(())
    }
}

struct ConstrainedSystem<'a, T> {
    laplacian: &'a MattingLaplacian<T>,
    weights: &'a [T],
}

impl<T: Scalar> LinearOperator<T> for ConstrainedSystem<'_, T> {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.laplacian.apply(x, y);
        for ((yi, &xi), &wi) in y.iter_mut().zip(x).zip(self.weights) {
            *yi += wi * xi;
        }
    }
}

pub fn closed_form_matte<T: Scalar>(image: &RasterImage<T>, t: &Trimap, sp: &SolverParams) -> Result<AlphaMatte<T>> {
    sp.validate()?;
    ensure_same_dims(image.dims(), t.dims(), "image/trimap")?;
    let side = 2 * sp.window_radius + 1;
    if image.width() < side || image.height() < side {
        return Err(Error::invalid(format!(
            "image {}x{} smaller than the {side}x{side} matting window",
            image.width(),
            image.height()
        )));
    }
    let unknown = t.count(Label::Unknown);
    if unknown == t.labels().len() {
        return Err(Error::UnderConstrained);
    }
    if unknown == 0 {
        return Ok(AlphaMatte::from_trimap(t));
    }

    let lambda = T::of(sp.lambda);
    let laplacian = MattingLaplacian::assemble(image, sp.window_radius, T::of(sp.epsilon));
    let weights: Vec<T> = t
        .labels()
        .iter()
        .map(|l| if l.is_known() { lambda } else { T::zero() })
        .collect();
    let rhs: Vec<T> = t
        .labels()
        .iter()
        .map(|&l| if l == Label::Foreground { lambda } else { T::zero() })
        .collect();
    let inv_diag: Vec<T> = laplacian
        .diagonal()
        .iter()
        .zip(&weights)
        .map(|(&d, &w)| {
            let v = d + w;
            if v > T::zero() {
                T::one() / v
            } else {
                T::one()
            }
        })
        .collect();

    // Start from the trimap itself: known pixels are already near their solution.
    let mut x: Vec<T> = t.values();
    let system = ConstrainedSystem {
        laplacian: &laplacian,
        weights: &weights,
    };
    let outcome = conjugate_gradient(
        &system,
        &rhs,
        &inv_diag,
        &mut x,
        T::of(sp.cg_tolerance),
        sp.cg_max_iterations,
    );
    if !outcome.converged {
        return Err(Error::SolverConvergence {
            iterations: outcome.iterations,
            residual: outcome.relative_residual,
        });
    }
    Ok(AlphaMatte::clamped(&Plane::new(t.width(), t.height(), x)?))
}

/// In-process backend wrapping [`closed_form_matte`].
#[derive(Debug, Clone, Default)]
pub struct ClosedFormBackend {
    pub params: SolverParams,
}

impl ClosedFormBackend {
    pub fn new(params: SolverParams) -> Self {
        Self { params }
    }
}

impl<T: Scalar> MattingBackend<T> for ClosedFormBackend {
    fn name(&self) -> String {
        "builtin-closed-form".into()
    }

    fn predict(&self, image: &RasterImage<T>, trimap: &Trimap) -> Result<Plane<T>> {
        Ok(closed_form_matte(image, trimap, &self.params)?.to_plane())
    }
}
