use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

/// Floating-point type the spectral core is generic over.
///
/// Implemented for `f32` and `f64`. All tolerances quoted in the test suite
/// assume `f64`; `f32` is supported for throughput-oriented use.
pub trait Scalar:
    Float + FloatConst + FftNum + NumAssign + Default + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite conversion to f64")
    }

    /// Relative precision used for "exact to round-off" checks.
    fn round_off() -> Self;
}

impl Scalar for f32 {
    fn round_off() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn round_off() -> Self {
        1e-12
    }
}
