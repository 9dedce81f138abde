//! Working scalar abstraction: all core math is generic over `f32`/`f64`.

use clarabel::algebra::FloatT;
use nalgebra::RealField;

/// Floating-point scalar usable throughout the crate: a `nalgebra` real field
/// that the conic solver backend also accepts.
pub trait Scalar: RealField + FloatT + Copy + Default {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Lifts an `f64` constant (tolerances, configuration defaults) into the
/// working scalar type.
#[inline]
pub fn cast<S: Scalar>(x: f64) -> S {
    num_traits::FromPrimitive::from_f64(x).expect("finite f64 constant")
}

/// Lowers a scalar to `f64` for reporting.
#[inline]
pub fn to_f64<S: Scalar>(x: S) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

// `num_traits::Float` (pulled in by the solver trait) and `nalgebra`'s field
// traits both define `abs`/`max`/`min`/`sqrt`, so method syntax is ambiguous
// on a generic scalar. These free functions pick one path.

#[inline]
pub fn fabs<S: Scalar>(x: S) -> S {
    num_traits::Float::abs(x)
}

#[inline]
pub fn fmax<S: Scalar>(a: S, b: S) -> S {
    num_traits::Float::max(a, b)
}

#[inline]
pub fn fmin<S: Scalar>(a: S, b: S) -> S {
    num_traits::Float::min(a, b)
}

#[inline]
pub fn fsqrt<S: Scalar>(x: S) -> S {
    num_traits::Float::sqrt(x)
}
