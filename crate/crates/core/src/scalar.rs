use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the numerical routines are generic over: `f32` or `f64`.
pub trait Scalar: NdFloat + FromPrimitive + ToPrimitive + Sum {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub(crate) fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Relative tolerance `rel` for `f64`, widened to a few ulps for narrower types.
#[inline]
pub(crate) fn rel_tol<T: Scalar>(rel: f64) -> T {
    let floor = T::epsilon() * lit::<T>(64.0);
    let t = lit::<T>(rel);
    if t > floor {
        t
    } else {
        floor
    }
}
