//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the solvers, drifts and spectral models are generic over.
///
/// Implemented for `f32` and `f64`. Constants are written as `S::lit(0.5)`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon scaled for tolerance comparisons.
    fn eps() -> Self {
        Self::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Rounds `t / dt` to the nearest grid index, half away from zero.
#[inline]
pub fn snap_index<S: Real>(t: S, dt: S) -> i64 {
    (t / dt).round().to_i64().unwrap_or(i64::MAX)
}
