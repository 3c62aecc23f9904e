use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmg::finger_direction;
use crate::planner::{push_face, GraspState, Primitive};
use crate::scalar::{lit, Real};
use crate::surface::{ray_intersect, OrientedSurface};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PushContact<T: Real> {
    pub position: Point3<T>,
    /// Outward normal of the pushed face.
    pub normal: Vector3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no surface point to push from")]
pub struct NoPushPoint;

/// Grasp geometry in object coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GraspFrame<T: Real> {
    pub contact: Point3<T>,
    pub closing: Vector3<T>,
    pub finger: Vector3<T>,
    pub opening: T,
}

impl<T: Real> GraspFrame<T> {
    pub fn from_grasp(g: &GraspState<T>) -> Self {
        let closing = g.closing_dir.normalize();
        let d = finger_direction(&g.principal_normal, g.principal_angle);
        let finger = (d - closing * closing.dot(&d)).normalize();
        Self {
            contact: g.principal_contact,
            closing,
            finger,
            opening: g.opening,
        }
    }

    /// Axis of the rotation primitive, pointing out of the object at the
    /// principal contact.
    pub fn axis(&self) -> Vector3<T> {
        -self.closing
    }

    /// Lateral axis completing the gripper frame.
    pub fn lateral(&self) -> Vector3<T> {
        self.axis().cross(&self.finger)
    }
}

/// Point where the second gripper pushes to produce `primitive`.
///
/// A translation pushes the face met along the translation direction. A
/// rotation pushes one end of the line across the finger, sunk `depth` past
/// the fingertip, on the side that turns the finger the requested way.
pub fn find_push_contact<T: Real>(
    surface: &OrientedSurface<T>,
    grasp: &GraspState<T>,
    primitive: &Primitive<T>,
    depth: T,
    resolution: T,
) -> Result<PushContact<T>, NoPushPoint> {
    push_contact_in(surface, &GraspFrame::from_grasp(grasp), primitive, depth, resolution)
}

pub(crate) fn push_contact_in<T: Real>(
    surface: &OrientedSurface<T>,
    f: &GraspFrame<T>,
    primitive: &Primitive<T>,
    depth: T,
    resolution: T,
) -> Result<PushContact<T>, NoPushPoint> {
    match primitive {
        Primitive::Translation(t) => push_face(surface, &f.contact, t, resolution)
            .map(|h| PushContact {
                position: h.position,
                normal: h.normal,
            })
            .ok_or(NoPushPoint),
        Primitive::Rotation(r) => {
            if *r == 0 {
                return Err(NoPushPoint);
            }
            let mid = f.contact + f.closing * (f.opening * lit(0.5));
            // keep the line inside thin parts
            let d = match first_exit(surface, &mid, &-f.finger, resolution) {
                Some(w) => depth.min(w * lit(0.5)),
                None => depth,
            };
            let origin = mid - f.finger * d;
            // the object turns opposite to the finger
            let omega = f.axis() * if *r > 0 { -T::one() } else { T::one() };
            let lateral = f.lateral();
            for side in [lateral, -lateral] {
                let Some(hit) = ray_intersect(surface, &origin, &side, T::zero(), resolution)
                    .into_iter()
                    .find(|h| h.normal.dot(&side) > T::zero())
                else {
                    continue;
                };
                let arm = hit.position - f.contact;
                if omega.cross(&arm).dot(&hit.normal) < T::zero() {
                    return Ok(PushContact {
                        position: hit.position,
                        normal: hit.normal,
                    });
                }
            }
            Err(NoPushPoint)
        }
    }
}

fn first_exit<T: Real>(surface: &OrientedSurface<T>, from: &Point3<T>, dir: &Vector3<T>, res: T) -> Option<T> {
    ray_intersect(surface, from, dir, T::zero(), res)
        .into_iter()
        .find(|h| h.normal.dot(dir) > T::zero())
        .map(|h| h.distance)
}
