use std::fmt::{Debug, LowerExp};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar the numerical core is written against.
///
/// Implemented for `f32` and `f64`. Random draws are always produced in
/// `f64` and narrowed, so a given seed yields the same stream for both.
pub trait Real: RealField + Copy + ToPrimitive + Default + LowerExp + Debug {
    /// Converts an `f64` literal or intermediate into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert::<f64, Self>(x)
    }

    /// Widens to `f64` (exact for both implementors).
    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Converts a count into `Self`.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
