//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real floating point type the toolkit can run on (`f32` or `f64`).
pub trait Scalar: RealField + Copy + ToPrimitive + Default {
    /// Machine epsilon of the type.
    fn machine_eps() -> Self;
}

impl Scalar for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    nalgebra::convert(v)
}

/// Lossless (f64) or widening (f32) conversion back to `f64`.
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
