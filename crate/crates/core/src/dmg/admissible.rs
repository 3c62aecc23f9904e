use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::DmgError;
use crate::scalar::{deg_to_rad, lit, to_f64, Real};
use crate::surface::{tangent_frame, OrientedSurface};

/// Finger modelled as a flat rectangle lying in the tangent plane at the
/// contact and extending `length` away from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FingerModel<T: Real> {
    pub length: T,
    pub width: T,
    /// Material this far above the tangent plane or less is ignored.
    pub height_clearance: T,
    /// Angular discretization in whole degrees.
    pub angle_step: u32,
}

impl<T: Real> Default for FingerModel<T> {
    fn default() -> Self {
        Self {
            length: lit(0.1),
            width: lit(0.02),
            height_clearance: lit(0.005),
            angle_step: 5,
        }
    }
}

impl<T: Real> FingerModel<T> {
    pub fn validate(&self) -> Result<(), DmgError> {
        let bad = |what: &str| Err(DmgError::InvalidFinger(what.to_string()));
        if !(self.length > T::zero()) {
            return bad("length must be positive");
        }
        if !(self.width > T::zero()) {
            return bad("width must be positive");
        }
        if !(self.height_clearance >= T::zero()) {
            return bad("height clearance must be non-negative");
        }
        if self.angle_step == 0 || 360 % self.angle_step != 0 {
            return bad("angle step must divide 360");
        }
        Ok(())
    }

    pub fn slots(&self) -> u32 {
        360 / self.angle_step
    }

    /// Unit direction of the finger at `angle` degrees in the frame of `normal`.
    pub fn direction(&self, normal: &Vector3<T>, angle: u32) -> Vector3<T> {
        finger_direction(normal, angle)
    }
}

pub fn finger_direction<T: Real>(normal: &Vector3<T>, angle: u32) -> Vector3<T> {
    let (t1, t2) = tangent_frame(normal);
    let a = deg_to_rad::<T>(lit(angle as f64));
    t1 * a.cos() + t2 * a.sin()
}

/// Angle in degrees (not discretized) of a tangent direction in the frame of
/// `normal`.
pub fn angle_of<T: Real>(normal: &Vector3<T>, dir: &Vector3<T>) -> f64 {
    let (t1, t2) = tangent_frame(normal);
    to_f64(dir.dot(&t2)).atan2(to_f64(dir.dot(&t1))).to_degrees()
}

/// Every discretized angle at which the finger rectangle placed at `contact`
/// clears the surface.
pub fn admissible_angles<T: Real>(
    surface: &OrientedSurface<T>,
    contact: &Point3<T>,
    normal: &Vector3<T>,
    finger: &FingerModel<T>,
) -> Vec<u32> {
    let (t1, t2) = tangent_frame(normal);
    let half_w = finger.width * lit(0.5);
    let reach = (finger.length * finger.length + half_w * half_w).sqrt();
    let slots = finger.slots() as usize;
    let dirs: Vec<(T, T)> = (0..slots)
        .map(|k| {
            let a = deg_to_rad::<T>(lit((k as u32 * finger.angle_step) as f64));
            (a.cos(), a.sin())
        })
        .collect();

    let grid = surface.grid(surface.default_cell().max(finger.length * lit(0.5)));
    let points = surface.points();
    let mut blocked = vec![false; slots];
    for i in grid.within_radius(points, contact, reach) {
        let w = points[i] - contact;
        if w.dot(normal) <= finger.height_clearance {
            continue;
        }
        let (u, v) = (w.dot(&t1), w.dot(&t2));
        for (k, &(c, s)) in dirs.iter().enumerate() {
            if blocked[k] {
                continue;
            }
            let along = u * c + v * s;
            let lat = v * c - u * s;
            if along >= T::zero() && along <= finger.length && lat.abs() <= half_w {
                blocked[k] = true;
            }
        }
    }
    (0..slots)
        .filter(|&k| !blocked[k])
        .map(|k| k as u32 * finger.angle_step)
        .collect()
}
