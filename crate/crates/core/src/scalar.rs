//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All of the linear algebra is written against [`Real`], which is satisfied
//! by `f32` and `f64`. Tolerances that the algorithms pin (rank thresholds,
//! structural checks) are expressed in double precision and converted with
//! [`lit`]; single precision runs use [`default_rank_tolerance`] to pick a
//! threshold that is meaningful at its epsilon.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use std::fmt::{Debug, Display};

/// Floating point scalar usable throughout the crate.
pub trait Real: RealField + Copy + Display + Debug + ToPrimitive + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts a double precision literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    nalgebra::convert(n as f64)
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Signum with `sgn(0) = 0`.
#[inline]
pub fn sgn<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Relative singular value threshold used for numerical rank decisions.
///
/// `1e-8` at double precision; scaled up for types whose epsilon makes that
/// threshold meaningless.
pub fn default_rank_tolerance<T: Real>() -> T {
    let floor = T::default_epsilon() * lit(1e4);
    let base = lit::<T>(1e-8);
    if floor > base {
        floor
    } else {
        base
    }
}
