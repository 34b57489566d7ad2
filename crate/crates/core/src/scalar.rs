use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Real scalar used for image channels, alpha values, solver state and metrics.
///
/// Implemented automatically for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Default + Debug + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; every implementor can represent the values used here.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion to f64")
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    #[inline]
    fn clamp_unit(self) -> Self {
        // NaN maps to 0 so a misbehaving backend cannot leak it past the prior clamp.
        if self.is_nan() {
            Self::zero()
        } else {
            self.max(Self::zero()).min(Self::one())
        }
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Default + Debug + Send + Sync + 'static
{
}
