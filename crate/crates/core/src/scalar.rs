//! Scalar abstraction shared by the numerical core.
//!
//! Everything that does arithmetic is generic over [`Scalar`], which is
//! satisfied by `f32` and `f64`. File IO, the simulation harness and the CLI
//! are fixed to `f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::LowerExp;

/// Real floating point type usable by the estimators.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + LowerExp {
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        nalgebra::convert(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: RealField + Copy + FromPrimitive + ToPrimitive + LowerExp {}
