//! Object geometry: oriented point clouds, patch segmentation and ray queries.

mod io;
mod normals;
mod ray;
mod segment;

use std::sync::{Arc, Mutex};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Real};
use crate::spatial::SpatialGrid;

pub use io::{load_surface, LoadOptions};
pub use normals::estimate_normals;
pub use ray::{ray_intersect, RayHit};
pub use segment::{segment, Connectivity, Patch, SegmentOptions, SurfacePatchGraph};

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: String, reason: String },
    #[error("a surface needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("resolution {resolution} is too coarse: one patch holds {percent:.1}% of the points")]
    ResolutionTooCoarse { resolution: f64, percent: f64 },
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Aabb<T: Real> {
    pub min: Point3<T>,
    pub max: Point3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<T>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            b.grow(p);
        }
        Some(b)
    }

    pub fn grow(&mut self, p: &Point3<T>) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn contains(&self, p: &Point3<T>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn inflated(&self, by: T) -> Self {
        let d = Vector3::repeat(by);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }

    pub fn extent(&self) -> Vector3<T> {
        self.max - self.min
    }

    pub fn max_extent(&self) -> T {
        self.extent().max()
    }

    pub fn diagonal(&self) -> T {
        self.extent().norm()
    }

    pub fn center(&self) -> Point3<T> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn overlaps(&self, other: &Aabb<T>) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }
}

/// Point cloud with one outward unit normal per point.
///
/// Immutable after construction. Spatial indices used by queries are built on
/// first use and cached per cell size, so the type can be shared freely across
/// threads.
pub struct OrientedSurface<T: Real> {
    points: Vec<Point3<T>>,
    normals: Vec<Vector3<T>>,
    bbox: Aabb<T>,
    grids: Mutex<Vec<(T, Arc<SpatialGrid<T>>)>>,
}

impl<T: Real> OrientedSurface<T> {
    /// Validates the cloud and renormalizes the normals.
    pub fn new(points: Vec<Point3<T>>, normals: Vec<Vector3<T>>) -> Result<Self, SurfaceError> {
        if points.len() < 4 {
            return Err(SurfaceError::TooFewPoints(points.len()));
        }
        if normals.len() != points.len() {
            return Err(SurfaceError::DegenerateGeometry(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(SurfaceError::DegenerateGeometry(format!(
                "point {i} is not finite"
            )));
        }
        let mut unit = Vec::with_capacity(normals.len());
        for (i, n) in normals.into_iter().enumerate() {
            let len = n.norm();
            if !(len > lit(1e-12)) || !len.is_finite() {
                return Err(SurfaceError::DegenerateGeometry(format!(
                    "normal {i} has zero length"
                )));
            }
            unit.push(n / len);
        }
        let bbox = Aabb::from_points(&points).expect("non-empty");
        if bbox.diagonal() <= T::zero() {
            return Err(SurfaceError::DegenerateGeometry(
                "all points coincide".into(),
            ));
        }
        Ok(Self {
            points,
            normals: unit,
            bbox,
            grids: Mutex::new(Vec::new()),
        })
    }

    /// Builds a surface from bare points, estimating normals from the
    /// `normal_k` nearest neighbours.
    pub fn from_points(points: Vec<Point3<T>>, normal_k: usize) -> Result<Self, SurfaceError> {
        if points.len() < 4 {
            return Err(SurfaceError::TooFewPoints(points.len()));
        }
        let normals = estimate_normals(&points, normal_k)?;
        Self::new(points, normals)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector3<T>] {
        &self.normals
    }

    pub fn bbox(&self) -> &Aabb<T> {
        &self.bbox
    }

    /// Centroid of the whole cloud.
    pub fn centroid(&self) -> Point3<T> {
        let n: T = lit(self.points.len() as f64);
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / n)
    }

    /// Returns a new surface with every coordinate multiplied by `scale`.
    pub fn scaled(&self, scale: T) -> Result<Self, SurfaceError> {
        Self::new(
            self.points.iter().map(|p| p * scale).collect(),
            self.normals.clone(),
        )
    }

    /// Cached uniform grid over the points with the requested cell size.
    pub fn grid(&self, cell: T) -> Arc<SpatialGrid<T>> {
        let mut grids = self.grids.lock().expect("grid cache poisoned");
        if let Some((_, g)) = grids.iter().find(|(c, _)| *c == cell) {
            return Arc::clone(g);
        }
        let g = Arc::new(SpatialGrid::new(&self.points, cell));
        grids.push((cell, Arc::clone(&g)));
        g
    }

    /// Nearest surface point to `q` as `(index, distance)`.
    pub fn nearest(&self, q: &Point3<T>) -> (usize, T) {
        let cell = self.default_cell();
        self.grid(cell)
            .nearest(&self.points, q)
            .expect("surface is never empty")
    }

    /// Mean nearest-neighbour spacing estimate used to size default grids.
    pub fn default_cell(&self) -> T {
        let area_proxy = {
            let e = self.bbox.extent();
            lit::<T>(2.0) * (e.x * e.y + e.y * e.z + e.x * e.z)
        };
        let n: T = lit(self.points.len() as f64);
        let spacing = (area_proxy / n).sqrt();
        let floor = self.bbox.diagonal() * lit(1e-4);
        (spacing * lit(4.0)).max(floor)
    }
}

impl<T: Real> Clone for OrientedSurface<T> {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            normals: self.normals.clone(),
            bbox: self.bbox,
            grids: Mutex::new(Vec::new()),
        }
    }
}

impl<T: Real> std::fmt::Debug for OrientedSurface<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OrientedSurface")
            .field("points", &self.points.len())
            .field("bbox_min", &self.bbox.min)
            .field("bbox_max", &self.bbox.max)
            .finish()
    }
}

/// Tangent frame `(t1, t2)` at a normal: `t1` is world +x projected onto the
/// tangent plane (world +y when the normal is nearly parallel to x), and
/// `t2 = n × t1`. Finger angles are measured counter-clockwise about `n`
/// starting from `t1`.
pub fn tangent_frame<T: Real>(normal: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let n = normal.normalize();
    let axis = if n.x.abs() > lit(0.99) {
        Vector3::y()
    } else {
        Vector3::x()
    };
    let t1 = (axis - n * n.dot(&axis)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}
