//! Ray queries against an unstructured point cloud.
//!
//! A point counts as a hit when it lies inside the cylinder of radius
//! `hit_radius` around the ray. Hits are split into crossings wherever the
//! along-ray gap exceeds twice the radius, and each gap cluster is further
//! split by surface orientation so that a ray skimming one face and then
//! leaving through another reports both faces separately.

use std::collections::HashSet;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Aabb, OrientedSurface};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RayHit<T: Real> {
    /// Point on the ray at `distance`.
    pub position: Point3<T>,
    /// Mean outward normal of the cloud points forming this crossing.
    pub normal: Vector3<T>,
    /// Distance along the ray from the origin.
    pub distance: T,
}

/// Surface crossings along `origin + s * direction` for `s > skip_radius`,
/// strictly increasing in distance. `direction` is normalized internally.
pub fn ray_intersect<T: Real>(
    surface: &OrientedSurface<T>,
    origin: &Point3<T>,
    direction: &Vector3<T>,
    skip_radius: T,
    hit_radius: T,
) -> Vec<RayHit<T>> {
    let len = direction.norm();
    if !(len > T::zero()) || !(hit_radius > T::zero()) {
        return Vec::new();
    }
    let dir = direction / len;
    let Some((t0, t1)) = slab(&surface.bbox().inflated(hit_radius), origin, &dir) else {
        return Vec::new();
    };
    let t0 = t0.max(T::zero());

    let cell = hit_radius * lit(1.25);
    let grid = surface.grid(cell);
    let mut keys = HashSet::new();
    let step = cell * lit(0.5);
    let mut t = t0;
    loop {
        let k = grid.key(&(origin + dir * t));
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    keys.insert([k[0] + dx, k[1] + dy, k[2] + dz]);
                }
            }
        }
        if t >= t1 {
            break;
        }
        t = (t + step).min(t1);
    }

    let points = surface.points();
    let normals = surface.normals();
    let r2 = hit_radius * hit_radius;
    let mut hits: Vec<(T, usize)> = Vec::new();
    for key in &keys {
        for &i in grid.cell(key) {
            let w = points[i] - origin;
            let along = w.dot(&dir);
            if along <= skip_radius || along <= T::zero() {
                continue;
            }
            let perp2 = w.norm_squared() - along * along;
            if perp2 <= r2 {
                hits.push((along, i));
            }
        }
    }
    hits.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });

    let gap = hit_radius * lit(2.0);
    let mut out: Vec<RayHit<T>> = Vec::new();
    let mut start = 0;
    while start < hits.len() {
        let mut end = start + 1;
        while end < hits.len() && hits[end].0 - hits[end - 1].0 <= gap {
            end += 1;
        }
        for (sum_t, count, nsum) in orientation_groups(&hits[start..end], normals) {
            let distance = sum_t / lit(count as f64);
            let normal = if nsum.norm() > lit(1e-12) {
                nsum.normalize()
            } else {
                nsum
            };
            out.push(RayHit {
                position: origin + dir * distance,
                normal,
                distance,
            });
        }
        start = end;
    }
    out.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out.dedup_by(|b, a| b.distance <= a.distance);
    out
}

/// Greedy grouping of a hit cluster by normal direction, returning
/// `(sum of distances, count, sum of normals)` per group.
fn orientation_groups<T: Real>(
    hits: &[(T, usize)],
    normals: &[Vector3<T>],
) -> Vec<(T, usize, Vector3<T>)> {
    let agree: T = lit(0.5);
    let mut groups: Vec<(T, usize, Vector3<T>)> = Vec::new();
    for &(t, i) in hits {
        let n = normals[i];
        match groups
            .iter_mut()
            .find(|g| g.2.normalize().dot(&n) > agree)
        {
            Some(g) => {
                g.0 += t;
                g.1 += 1;
                g.2 += n;
            }
            None => groups.push((t, 1, n)),
        }
    }
    groups
}

/// Parametric entry/exit of a ray through a box.
fn slab<T: Real>(b: &Aabb<T>, o: &Point3<T>, d: &Vector3<T>) -> Option<(T, T)> {
    let mut lo = -T::max_value().unwrap_or(lit(1e300));
    let mut hi = T::max_value().unwrap_or(lit(1e300));
    for a in 0..3 {
        if d[a].abs() < lit(1e-15) {
            if o[a] < b.min[a] || o[a] > b.max[a] {
                return None;
            }
            continue;
        }
        let inv = T::one() / d[a];
        let (mut ta, mut tb) = ((b.min[a] - o[a]) * inv, (b.max[a] - o[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        lo = lo.max(ta);
        hi = hi.min(tb);
    }
    (hi >= lo && hi >= T::zero()).then_some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn ray_through_box_hits_opposite_face_at_thickness() {
        let s = shapes::box_surface::<f64>(0.1, 0.1, 0.02, 0.002);
        let res = 0.013;
        // centroid of the top face
        let origin = Point3::new(0.001, 0.001, 0.01);
        let hits = ray_intersect(&s, &origin, &-Vector3::z(), 0.5 * res, res);
        let first = hits.first().expect("a hit");
        assert!((first.distance - 0.02).abs() <= res);
        assert!(first.normal.dot(&-Vector3::z()) > 0.9);
    }

    #[test]
    fn ray_pointing_away_misses() {
        let s = shapes::box_surface::<f64>(0.1, 0.1, 0.02, 0.002);
        let origin = Point3::new(0.0, 0.0, 0.2);
        assert!(ray_intersect(&s, &origin, &Vector3::z(), 0.0, 0.013).is_empty());
    }

    #[test]
    fn own_neighbourhood_is_skipped() {
        let s = shapes::box_surface::<f64>(0.1, 0.1, 0.02, 0.002);
        let res = 0.013;
        let origin = Point3::new(0.001, 0.001, 0.01);
        let hits = ray_intersect(&s, &origin, &-Vector3::z(), 2.0 * res, res);
        assert!(hits.iter().all(|h| h.distance > 2.0 * res));
        // the opposite face at 20 mm is inside the skip radius as well
        assert!(hits.is_empty());
        let none_skipped = ray_intersect(&s, &origin, &-Vector3::z(), 0.0, res);
        assert!(!none_skipped.is_empty());
    }

    #[test]
    fn skimming_ray_reports_end_face_separately() {
        let s = shapes::box_surface::<f64>(0.1, 0.04, 0.02, 0.002);
        let origin = Point3::new(-0.03, 0.0, 0.01);
        let hits = ray_intersect(&s, &origin, &Vector3::x(), 0.001, 0.01);
        let end = hits
            .iter()
            .find(|h| h.normal.dot(&Vector3::x()) > 0.5)
            .expect("end face");
        assert!((end.distance - 0.08).abs() < 0.005);
    }

    #[test]
    fn distances_strictly_increase() {
        let s = shapes::two_cubes::<f64>(0.04, 0.05, 0.002);
        let origin = Point3::new(-0.2, 0.0, 0.0);
        let hits = ray_intersect(&s, &origin, &Vector3::x(), 0.0, 0.01);
        assert!(hits.len() >= 4);
        assert!(hits.windows(2).all(|w| w[0].distance < w[1].distance));
    }
}
