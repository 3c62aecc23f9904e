//! Synthetic test geometry: sampled boxes, plates, cylinders, spheres and
//! simple constructive solids (the plug and the slotted plate).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};
use crate::surface::OrientedSurface;

/// Axis-aligned box used as a building block for constructive solids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid<T: Real> {
    pub min: Point3<T>,
    pub max: Point3<T>,
}

impl<T: Real> Cuboid<T> {
    pub fn new(min: Point3<T>, max: Point3<T>) -> Self {
        Self { min, max }
    }

    pub fn centered(center: Point3<T>, size: Vector3<T>) -> Self {
        let h = size * lit::<T>(0.5);
        Self {
            min: center - h,
            max: center + h,
        }
    }

    fn contains(&self, p: &Point3<T>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Face samples at cell centres with outward normals.
    fn face_samples(&self, pitch: T) -> Vec<(Point3<T>, Vector3<T>)> {
        let mut out = Vec::new();
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let nu = cells(self.max[u] - self.min[u], pitch);
            let nv = cells(self.max[v] - self.min[v], pitch);
            let du = (self.max[u] - self.min[u]) / lit(nu as f64);
            let dv = (self.max[v] - self.min[v]) / lit(nv as f64);
            for (coord, sign) in [(self.min[axis], -1.0), (self.max[axis], 1.0)] {
                let mut n = Vector3::zeros();
                n[axis] = lit(sign);
                for i in 0..nu {
                    for j in 0..nv {
                        let mut p = Point3::origin();
                        p[axis] = coord;
                        p[u] = self.min[u] + du * lit(i as f64 + 0.5);
                        p[v] = self.min[v] + dv * lit(j as f64 + 0.5);
                        out.push((p, n));
                    }
                }
            }
        }
        out
    }
}

fn cells<T: Real>(extent: T, pitch: T) -> usize {
    (extent / pitch).round().to_usize().unwrap_or(1).max(1)
}

/// Union of `added` boxes minus the union of `removed` boxes.
#[derive(Debug, Clone, Default)]
pub struct Solid<T: Real> {
    pub added: Vec<Cuboid<T>>,
    pub removed: Vec<Cuboid<T>>,
}

impl<T: Real> Solid<T> {
    pub fn union(boxes: Vec<Cuboid<T>>) -> Self {
        Self {
            added: boxes,
            removed: Vec::new(),
        }
    }

    pub fn minus(mut self, cut: Cuboid<T>) -> Self {
        self.removed.push(cut);
        self
    }

    pub fn contains(&self, p: &Point3<T>) -> bool {
        self.added.iter().any(|b| b.contains(p)) && !self.removed.iter().any(|b| b.contains(p))
    }

    /// Samples the boundary of the solid at roughly `pitch` spacing.
    pub fn sample(&self, pitch: T) -> OrientedSurface<T> {
        let eps = pitch * lit(1e-3);
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let candidates = self
            .added
            .iter()
            .flat_map(|b| b.face_samples(pitch))
            .chain(
                self.removed
                    .iter()
                    .flat_map(|b| b.face_samples(pitch).into_iter().map(|(p, n)| (p, -n))),
            );
        for (p, n) in candidates {
            if self.contains(&(p - n * eps)) && !self.contains(&(p + n * eps)) {
                points.push(p);
                normals.push(n);
            }
        }
        OrientedSurface::new(points, normals).expect("generated solid is well formed")
    }
}

/// Box of the given size centred at the origin.
pub fn box_surface<T: Real>(lx: T, ly: T, lz: T, pitch: T) -> OrientedSurface<T> {
    Solid::union(vec![Cuboid::centered(Point3::origin(), Vector3::new(lx, ly, lz))]).sample(pitch)
}

/// Two cubes of edge `edge` along x with `gap` between their facing sides.
pub fn two_cubes<T: Real>(edge: T, gap: T, pitch: T) -> OrientedSurface<T> {
    let off = (edge + gap) * lit(0.5);
    let size = Vector3::repeat(edge);
    Solid::union(vec![
        Cuboid::centered(Point3::new(-off, T::zero(), T::zero()), size),
        Cuboid::centered(Point3::new(off, T::zero(), T::zero()), size),
    ])
    .sample(pitch)
}

/// Square-section plug: wide base, narrow neck, wide head, stacked along +z
/// starting at z = 0.
pub fn plug<T: Real>(dims: &PlugDims<T>, pitch: T) -> OrientedSurface<T> {
    plug_solid(dims).sample(pitch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlugDims<T: Real> {
    pub base_width: T,
    pub base_height: T,
    pub neck_width: T,
    pub neck_height: T,
    pub head_width: T,
    pub head_height: T,
}

impl<T: Real> Default for PlugDims<T> {
    fn default() -> Self {
        Self {
            base_width: lit(0.08),
            base_height: lit(0.03),
            neck_width: lit(0.03),
            neck_height: lit(0.03),
            head_width: lit(0.06),
            head_height: lit(0.03),
        }
    }
}

impl<T: Real> PlugDims<T> {
    /// Centre of the neck side face facing +x.
    pub fn neck_contact(&self) -> (Point3<T>, Vector3<T>) {
        let half: T = lit(0.5);
        (
            Point3::new(
                self.neck_width * half,
                T::zero(),
                self.base_height + self.neck_height * half,
            ),
            Vector3::x(),
        )
    }
}

pub fn plug_solid<T: Real>(d: &PlugDims<T>) -> Solid<T> {
    let half: T = lit(0.5);
    let z = T::zero();
    let layer = |w: T, z0: T, h: T| {
        Cuboid::new(
            Point3::new(-w * half, -w * half, z0),
            Point3::new(w * half, w * half, z0 + h),
        )
    };
    Solid::union(vec![
        layer(d.base_width, z, d.base_height),
        layer(d.neck_width, d.base_height, d.neck_height),
        layer(d.head_width, d.base_height + d.neck_height, d.head_height),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDims<T: Real> {
    pub length: T,
    pub width: T,
    pub thickness: T,
    pub slot_length: T,
    pub slot_width: T,
    pub slot_depth: T,
}

/// Plate centred at the origin with a rectangular pocket cut into its bottom
/// face. A `slot_width` at least the plate width gives a through groove.
pub fn plate_with_slot<T: Real>(d: &SlotDims<T>, pitch: T) -> OrientedSurface<T> {
    let half: T = lit(0.5);
    let plate = Cuboid::centered(Point3::origin(), Vector3::new(d.length, d.width, d.thickness));
    let bottom = -d.thickness * half;
    let slot_w = if d.slot_width >= d.width {
        d.width + pitch * lit(4.0)
    } else {
        d.slot_width
    };
    let cut = Cuboid::new(
        Point3::new(-d.slot_length * half, -slot_w * half, bottom - pitch * lit(2.0)),
        Point3::new(d.slot_length * half, slot_w * half, bottom + d.slot_depth),
    );
    Solid::union(vec![plate]).minus(cut).sample(pitch)
}

/// Closed cylinder along z, centred at the origin.
pub fn cylinder<T: Real>(radius: T, height: T, pitch: T) -> OrientedSurface<T> {
    let two_pi = T::two_pi();
    let half: T = lit(0.5);
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let n_theta = cells(two_pi * radius, pitch).max(3);
    let n_z = cells(height, pitch);
    for i in 0..n_theta {
        let a = two_pi * lit(i as f64) / lit(n_theta as f64);
        let (s, c) = (a.sin(), a.cos());
        for j in 0..n_z {
            let z = -height * half + height * lit((j as f64 + 0.5) / n_z as f64);
            points.push(Point3::new(radius * c, radius * s, z));
            normals.push(Vector3::new(c, s, T::zero()));
        }
    }
    let rings = cells(radius, pitch);
    for k in 0..rings {
        let r = radius * lit((k as f64 + 0.5) / rings as f64);
        let m = cells(two_pi * r, pitch).max(1);
        for i in 0..m {
            let a = two_pi * lit(i as f64) / lit(m as f64);
            for sign in [-1.0, 1.0] {
                points.push(Point3::new(r * a.cos(), r * a.sin(), height * half * lit(sign)));
                normals.push(Vector3::new(T::zero(), T::zero(), lit(sign)));
            }
        }
    }
    OrientedSurface::new(points, normals).expect("cylinder is well formed")
}

/// Sphere sampled on a Fibonacci lattice.
pub fn sphere<T: Real>(radius: T, pitch: T) -> OrientedSurface<T> {
    let area = lit::<T>(4.0) * T::pi() * radius * radius;
    let n = (area / (pitch * pitch)).round().to_usize().unwrap_or(4).max(4);
    let golden = T::pi() * (lit::<T>(3.0) - lit::<T>(5.0).sqrt());
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for i in 0..n {
        let z = T::one() - lit::<T>(2.0) * lit::<T>(i as f64 + 0.5) / lit(n as f64);
        let r = (T::one() - z * z).max(T::zero()).sqrt();
        let a = golden * lit(i as f64);
        let dir = Vector3::new(r * a.cos(), r * a.sin(), z);
        points.push(Point3::from(dir * radius));
        normals.push(dir);
    }
    OrientedSurface::new(points, normals).expect("sphere is well formed")
}

/// Named generator with its dimensions, parsed from `name:d1,d2,...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub name: ShapeKind,
    pub dims: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    Plate,
    Bar,
    Cylinder,
    Sphere,
    Plug,
    PlateWithSlot,
}

impl ShapeKind {
    fn arity(self) -> usize {
        match self {
            ShapeKind::Box | ShapeKind::Plate | ShapeKind::Bar => 3,
            ShapeKind::Cylinder => 2,
            ShapeKind::Sphere => 1,
            ShapeKind::Plug | ShapeKind::PlateWithSlot => 6,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ShapeKind::Box => "box",
            ShapeKind::Plate => "plate",
            ShapeKind::Bar => "bar",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Sphere => "sphere",
            ShapeKind::Plug => "plug",
            ShapeKind::PlateWithSlot => "plate_with_slot",
        }
    }
}

impl FromStr for ShapeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = match name.trim() {
            "box" => ShapeKind::Box,
            "plate" => ShapeKind::Plate,
            "bar" => ShapeKind::Bar,
            "cylinder" => ShapeKind::Cylinder,
            "sphere" => ShapeKind::Sphere,
            "plug" => ShapeKind::Plug,
            "plate_with_slot" => ShapeKind::PlateWithSlot,
            other => return Err(format!("unknown shape generator `{other}`")),
        };
        let dims: Vec<f64> = if rest.trim().is_empty() {
            default_dims(kind)
        } else {
            rest.split(',')
                .map(|d| d.trim().parse::<f64>().map_err(|e| format!("bad dimension `{d}`: {e}")))
                .collect::<Result<_, _>>()?
        };
        if dims.len() != kind.arity() {
            return Err(format!(
                "`{}` takes {} dimensions, got {}",
                kind.name(),
                kind.arity(),
                dims.len()
            ));
        }
        if let Some(bad) = dims.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(format!("dimensions must be positive, got {bad}"));
        }
        Ok(ShapeSpec { name: kind, dims })
    }
}

impl fmt::Display for ShapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}:{}", self.name.name(), dims.join(","))
    }
}

fn default_dims(kind: ShapeKind) -> Vec<f64> {
    match kind {
        ShapeKind::Box => vec![0.1, 0.1, 0.02],
        ShapeKind::Plate => vec![0.2, 0.06, 0.02],
        ShapeKind::Bar => vec![0.3, 0.03, 0.02],
        ShapeKind::Cylinder => vec![0.05, 0.1],
        ShapeKind::Sphere => vec![0.1],
        ShapeKind::Plug => vec![0.08, 0.03, 0.03, 0.03, 0.06, 0.03],
        ShapeKind::PlateWithSlot => vec![0.2, 0.1, 0.04, 0.06, 0.05, 0.025],
    }
}

impl ShapeSpec {
    pub fn generate<T: Real>(&self, pitch: T) -> OrientedSurface<T> {
        let d: Vec<T> = self.dims.iter().map(|&x| lit(x)).collect();
        match self.name {
            ShapeKind::Box | ShapeKind::Plate | ShapeKind::Bar => box_surface(d[0], d[1], d[2], pitch),
            ShapeKind::Cylinder => cylinder(d[0], d[1], pitch),
            ShapeKind::Sphere => sphere(d[0], pitch),
            ShapeKind::Plug => plug(
                &PlugDims {
                    base_width: d[0],
                    base_height: d[1],
                    neck_width: d[2],
                    neck_height: d[3],
                    head_width: d[4],
                    head_height: d[5],
                },
                pitch,
            ),
            ShapeKind::PlateWithSlot => plate_with_slot(
                &SlotDims {
                    length: d[0],
                    width: d[1],
                    thickness: d[2],
                    slot_length: d[3],
                    slot_width: d[4],
                    slot_depth: d[5],
                },
                pitch,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_sample_count_and_normals() {
        let s = box_surface::<f64>(0.1, 0.1, 0.02, 0.001);
        assert_eq!(s.len(), 2 * 10_000 + 4 * 2_000);
        let c = s.centroid();
        for (p, n) in s.points().iter().zip(s.normals()) {
            assert!((p - c).dot(n) > 0.0);
        }
    }

    #[test]
    fn plug_has_no_buried_points() {
        let d = PlugDims::<f64>::default();
        let solid = plug_solid(&d);
        let s = plug(&d, 0.002);
        for (p, n) in s.points().iter().zip(s.normals()) {
            assert!(!solid.contains(&(p + n * 1e-4)));
            assert!(solid.contains(&(p - n * 1e-4)));
        }
        // the neck side face is present
        let (c, _) = d.neck_contact();
        let near = s.points().iter().filter(|p| (*p - c).norm() < 0.003).count();
        assert!(near > 0);
    }

    #[test]
    fn slot_floor_faces_down() {
        let d = SlotDims {
            length: 0.2,
            width: 0.1,
            thickness: 0.02,
            slot_length: 0.06,
            slot_width: 0.05,
            slot_depth: 0.01,
        };
        let s = plate_with_slot::<f64>(&d, 0.002);
        let floor = s
            .points()
            .iter()
            .zip(s.normals())
            .filter(|(p, n)| p.x.abs() < 0.02 && p.y.abs() < 0.02 && n.z < -0.9)
            .map(|(p, _)| p.z)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((floor - 0.0).abs() < 1e-9, "pocket ceiling at {floor}");
    }

    #[test]
    fn sphere_and_cylinder_normals_are_radial() {
        let s = sphere::<f64>(0.1, 0.01);
        for (p, n) in s.points().iter().zip(s.normals()) {
            assert!((p.coords.normalize() - n).norm() < 1e-9);
        }
        let c = cylinder::<f64>(0.05, 0.1, 0.005);
        assert!(c.len() > 100);
    }

    #[test]
    fn shape_spec_parsing() {
        let s: ShapeSpec = "box:0.1,0.1,0.02".parse().unwrap();
        assert_eq!(s.name, ShapeKind::Box);
        assert_eq!(s.to_string(), "box:0.1,0.1,0.02");
        assert!("box:0.1,0.1".parse::<ShapeSpec>().is_err());
        assert!("torus:1".parse::<ShapeSpec>().is_err());
        assert!("sphere:-1".parse::<ShapeSpec>().is_err());
        let p: ShapeSpec = "plug".parse().unwrap();
        assert_eq!(p.dims.len(), 6);
    }
}
