//! Point-cloud readers: PLY (ascii or binary), OBJ vertices, and plain XYZ text.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};

use super::{OrientedSurface, SurfaceError};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Neighbourhood size for normal estimation when the file carries none.
    pub normal_k: usize,
    /// Multiplier applied to every coordinate, e.g. 0.001 for millimetre files.
    pub input_scale: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            normal_k: 10,
            input_scale: 1.0,
        }
    }
}

struct RawCloud {
    points: Vec<[f64; 3]>,
    normals: Option<Vec<[f64; 3]>>,
}

/// Reads a point cloud from `path`. The format is chosen by extension
/// (`.ply`, `.obj`, anything else is parsed as whitespace separated XYZ with
/// optional normal columns).
pub fn load_surface<T: Real>(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<OrientedSurface<T>, SurfaceError> {
    let path = path.as_ref();
    let unreadable = |reason: String| SurfaceError::UnreadableFile {
        path: path.display().to_string(),
        reason,
    };
    let file = File::open(path).map_err(|e| unreadable(e.to_string()))?;
    let mut reader = BufReader::new(file);
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let raw = match ext.as_str() {
        "ply" => read_ply(&mut reader),
        "obj" => read_obj(&mut reader),
        _ => read_xyz(&mut reader),
    }
    .map_err(unreadable)?;

    if raw.points.len() < 4 {
        return Err(SurfaceError::TooFewPoints(raw.points.len()));
    }
    let scale = opts.input_scale;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(unreadable(format!("input_scale must be positive, got {scale}")));
    }
    let points: Vec<Point3<T>> = raw
        .points
        .iter()
        .map(|p| Point3::new(lit(p[0] * scale), lit(p[1] * scale), lit(p[2] * scale)))
        .collect();
    match raw.normals {
        Some(n) => OrientedSurface::new(
            points,
            n.iter().map(|v| Vector3::new(lit(v[0]), lit(v[1]), lit(v[2]))).collect(),
        ),
        None => OrientedSurface::from_points(points, opts.normal_k),
    }
}

fn read_xyz(reader: &mut impl BufRead) -> Result<RawCloud, String> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(format!(
                "line {}: expected 3 or 6 columns, found {}",
                lineno + 1,
                vals.len()
            ));
        }
        match columns {
            None => columns = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(format!("line {}: inconsistent column count", lineno + 1))
            }
            _ => {}
        }
        points.push([vals[0], vals[1], vals[2]]);
        if vals.len() == 6 {
            normals.push([vals[3], vals[4], vals[5]]);
        }
    }
    Ok(RawCloud {
        normals: (columns == Some(6)).then_some(normals),
        points,
    })
}

fn read_obj(reader: &mut impl BufRead) -> Result<RawCloud, String> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let mut it = line.split_whitespace();
        let target = match it.next() {
            Some("v") => &mut points,
            Some("vn") => &mut normals,
            _ => continue,
        };
        let vals: Vec<f64> = it
            .take(3)
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if vals.len() != 3 {
            return Err(format!("line {}: expected three coordinates", lineno + 1));
        }
        target.push([vals[0], vals[1], vals[2]]);
    }
    let has_normals = !normals.is_empty() && normals.len() == points.len();
    Ok(RawCloud {
        points,
        normals: has_normals.then_some(normals),
    })
}

fn read_ply(reader: &mut impl Read) -> Result<RawCloud, String> {
    let parser = Parser::<DefaultElement>::new();
    let ply = parser.read_ply(reader).map_err(|e| e.to_string())?;
    let vertices = ply
        .payload
        .get("vertex")
        .ok_or_else(|| "PLY file has no vertex element".to_string())?;
    let scalar = |el: &DefaultElement, key: &str| -> Option<f64> {
        match el.get(key)? {
            Property::Float(v) => Some(*v as f64),
            Property::Double(v) => Some(*v),
            Property::Int(v) => Some(*v as f64),
            Property::UInt(v) => Some(*v as f64),
            Property::Short(v) => Some(*v as f64),
            Property::UShort(v) => Some(*v as f64),
            Property::Char(v) => Some(*v as f64),
            Property::UChar(v) => Some(*v as f64),
            _ => None,
        }
    };
    let mut points = Vec::with_capacity(vertices.len());
    let mut normals = Vec::with_capacity(vertices.len());
    let mut has_normals = true;
    for (i, v) in vertices.iter().enumerate() {
        let p = ["x", "y", "z"].map(|k| scalar(v, k));
        match p {
            [Some(x), Some(y), Some(z)] => points.push([x, y, z]),
            _ => return Err(format!("vertex {i} lacks x/y/z")),
        }
        match ["nx", "ny", "nz"].map(|k| scalar(v, k)) {
            [Some(x), Some(y), Some(z)] => normals.push([x, y, z]),
            _ => has_normals = false,
        }
    }
    Ok(RawCloud {
        points,
        normals: has_normals.then_some(normals),
    })
}
