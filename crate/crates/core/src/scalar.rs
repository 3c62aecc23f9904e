//! Scalar abstraction shared by every geometric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating point type the geometry, planning and kinematics code is generic over.
///
/// Implemented for `f32` and `f64`. Serialization bounds are part of the trait so
/// that every domain type can derive `Serialize`/`Deserialize` without extra
/// `where` clauses.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Serialize + DeserializeOwned + Default
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Lossy conversion back to `f64`, used for reporting and serialization of
/// derived quantities.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn deg_to_rad<T: Real>(deg: T) -> T {
    deg * T::pi() / lit(180.0)
}

#[inline]
pub fn rad_to_deg<T: Real>(rad: T) -> T {
    rad * lit(180.0) / T::pi()
}

/// Total order wrapper for priority queues over a partially ordered scalar.
/// NaN compares equal to everything, which never happens for finite costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OrdScalar<T>(pub T);

impl<T: Real> Eq for OrdScalar<T> {}

impl<T: Real> PartialOrd for OrdScalar<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for OrdScalar<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .partial_cmp(&other.0)
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}
