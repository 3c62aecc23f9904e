//! Dual-arm execution of primitive sequences in the extended cooperative
//! task space.
//!
//! The first gripper holds the object; the second one pushes it. Relative
//! motion between the two arms moves the object inside the first gripper.

mod contact;
mod sim;

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};

pub use contact::{find_push_contact, PushContact};
pub use sim::{
    simulate_execution, ControllerGains, ExecError, Execution, ExecutionOptions, ExecutionReport,
    LogRecord, Phase,
};

/// Linear then angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Twist<T: Real> {
    pub linear: Vector3<T>,
    pub angular: Vector3<T>,
}

impl<T: Real> Twist<T> {
    pub fn new(linear: Vector3<T>, angular: Vector3<T>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_array(a: [T; 6]) -> Self {
        Self::new(Vector3::new(a[0], a[1], a[2]), Vector3::new(a[3], a[4], a[5]))
    }

    /// `(v_x, v_y, v_z, ω_x, ω_y, ω_z)`.
    pub fn to_array(&self) -> [T; 6] {
        let (v, w) = (self.linear, self.angular);
        [v.x, v.y, v.z, w.x, w.y, w.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Both parts rotated by `r`, about the frame origin.
    pub fn rotated(&self, r: &Matrix3<T>) -> Self {
        Self::new(r * self.linear, r * self.angular)
    }
}

impl<T: Real> Add for Twist<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.linear + o.linear, self.angular + o.angular)
    }
}

impl<T: Real> Sub for Twist<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.linear - o.linear, self.angular - o.angular)
    }
}

impl<T: Real> Neg for Twist<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.linear, -self.angular)
    }
}

impl<T: Real> Mul<T> for Twist<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.linear * k, self.angular * k)
    }
}

/// Coordination coefficients: `alpha` in [0, 1] shares the relative motion
/// between the arms, `beta` in {0, 1} couples them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EctsParams<T: Real> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> Default for EctsParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::one(),
            beta: T::one(),
        }
    }
}

impl<T: Real> EctsParams<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha >= T::zero() && self.alpha <= T::one()) {
            return Err(format!("alpha must lie in [0, 1], got {:?}", self.alpha));
        }
        if self.beta != T::zero() && self.beta != T::one() {
            return Err(format!("beta must be 0 or 1, got {:?}", self.beta));
        }
        Ok(())
    }

    /// Determinant of each 2×2 block of the map.
    pub fn determinant(&self) -> T {
        self.alpha * self.alpha - self.beta * (T::one() - self.alpha)
    }
}

/// Per-arm twists `(ẋ₁, ẋ₂)` from absolute and relative twists.
pub fn ects_map<T: Real>(p: &EctsParams<T>, absolute: &Twist<T>, relative: &Twist<T>) -> (Twist<T>, Twist<T>) {
    let one = T::one();
    let x1 = *absolute * p.alpha - *relative * (one - p.alpha);
    let x2 = -(*absolute * p.beta) + *relative * p.alpha;
    (x1, x2)
}

/// Absolute and relative twists that produce `(x1, x2)`, or `None` when the
/// map is singular.
pub fn ects_inverse<T: Real>(p: &EctsParams<T>, x1: &Twist<T>, x2: &Twist<T>) -> Option<(Twist<T>, Twist<T>)> {
    let det = p.determinant();
    if det.abs() <= lit(1e-12) {
        return None;
    }
    let inv = T::one() / det;
    let absolute = (*x1 * p.alpha + *x2 * (T::one() - p.alpha)) * inv;
    let relative = (*x1 * p.beta + *x2 * p.alpha) * inv;
    Some((absolute, relative))
}

/// Relative twist for a translation primitive: the object moves against the
/// desired contact motion `t`, given in the gripper x-z plane.
pub fn translation_velocity<T: Real>(t: &Vector2<T>, gripper_rotation: &Matrix3<T>, magnitude: T) -> Twist<T> {
    let embedded = Vector3::new(t.x, T::zero(), t.y);
    let dir = (gripper_rotation * embedded).normalize();
    Twist::new(-dir * magnitude, Vector3::zeros())
}

/// Relative twist in the first gripper frame for a rotation about its y
/// axis, per unit radius of the pushed point.
pub fn rotation_velocity<T: Real>(theta: T, phi: T, phi_dot: T) -> Twist<T> {
    let a = theta + phi;
    Twist::from_array([
        a.cos() * phi_dot,
        T::zero(),
        -a.sin() * phi_dot,
        T::zero(),
        phi_dot,
        T::zero(),
    ])
}

/// Pose increment of a rigid body moving with twist `(v, ω)` about the frame
/// origin for `dt`: rotation and translation of the screw motion.
pub fn twist_step<T: Real>(twist: &Twist<T>, dt: T) -> (Matrix3<T>, Vector3<T>) {
    let w = twist.angular * dt;
    let v = twist.linear * dt;
    let th = w.norm();
    if th < lit(1e-12) {
        return (Matrix3::identity(), v);
    }
    let k = w.cross_matrix();
    let rot = nalgebra::Rotation3::new(w).into_inner();
    let th2 = th * th;
    let j = Matrix3::identity() + k * ((T::one() - th.cos()) / th2) + k * k * ((th - th.sin()) / (th2 * th));
    (rot, j * v)
}
