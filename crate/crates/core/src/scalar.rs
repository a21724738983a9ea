//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign, NumCast};

/// Floating-point scalar the toolkit is generic over.
///
/// Everything numeric (network model, solver, losses, tensors) is written
/// against this trait so the same code runs in f32 and f64.
pub trait Scalar:
    Float + NumAssign + NumCast + Sum + Debug + Display + Send + Sync + 'static
{
    /// Short type name used in file headers ("f32" / "f64").
    const NAME: &'static str;

    #[inline]
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 conversion")
    }

    #[inline]
    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}
