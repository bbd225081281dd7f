//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar (implemented for `f32` and `f64`).
///
/// All solver code is written against this trait; the tolerances baked into
/// the defaults assume double precision, so `f32` is mainly useful for cheap
/// rollouts and experimentation.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Machine epsilon of the underlying type.
    fn machine_eps() -> Self;

    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion used for reporting and serialization.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

/// Shorthand for [`Real::lit`].
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}
