//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real floating-point scalar usable by the solvers (`f32` or `f64`).
///
/// The decompositions come from `nalgebra`, so the bound is its
/// `RealField`; conversions to and from primitive literals go through
/// `num-traits`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Machine epsilon of the underlying type.
    fn machine_eps() -> Self;
    /// Smallest positive normal value.
    fn tiny() -> Self;
}

impl Scalar for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
    fn tiny() -> Self {
        f64::MIN_POSITIVE
    }
}

impl Scalar for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
    fn tiny() -> Self {
        f32::MIN_POSITIVE
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts `T` into `f64` for reporting.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Converts a count into `T`.
#[inline]
pub fn from_usize<T: Scalar>(k: usize) -> T {
    T::from_usize(k).expect("count representable in scalar type")
}

/// Tolerance for `U^T B U = I_r` checks, scaled by the number of columns.
///
/// `1e-10 * r` in double precision; single precision falls back to a
/// multiple of its epsilon.
pub fn feasibility_tol<T: Scalar>(r: usize) -> T {
    let base = lit::<T>(1e-10).max(T::machine_eps() * lit(1e3));
    base * from_usize(r.max(1))
}

/// Tolerance for the skew-symmetry test of `U^T B xi`.
pub fn tangency_tol<T: Scalar>() -> T {
    lit::<T>(1e-9).max(T::machine_eps() * lit(1e4))
}
