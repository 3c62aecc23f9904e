use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use super::{Aabb, SurfaceError};
use crate::scalar::{lit, Real};
use crate::spatial::SpatialGrid;

/// Estimates unit normals by local plane fitting over the `k` nearest
/// neighbours of each point.
///
/// Normals are flipped to point away from the cloud centroid. A single
/// consistency pass then flips any normal that disagrees with a strict
/// majority of its near-parallel neighbours, which repairs the centroid rule
/// on concave regions.
pub fn estimate_normals<T: Real>(
    points: &[Point3<T>],
    k: usize,
) -> Result<Vec<Vector3<T>>, SurfaceError> {
    if points.len() < 4 {
        return Err(SurfaceError::TooFewPoints(points.len()));
    }
    check_extent(points)?;
    let k = k.max(3).min(points.len());
    let bbox = Aabb::from_points(points).expect("non-empty");
    let n: T = lit(points.len() as f64);
    let centroid = Point3::from(
        points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords)
            / n,
    );

    let spacing = {
        let e = bbox.extent();
        let area = lit::<T>(2.0) * (e.x * e.y + e.y * e.z + e.x * e.z);
        (area / n).sqrt()
    };
    let cell = (spacing * lit(2.0)).max(bbox.diagonal() * lit(1e-4));
    let grid = SpatialGrid::new(points, cell);

    let neighbours: Vec<Vec<usize>> = points
        .iter()
        .map(|p| grid.nearest_k(points, p, k).into_iter().map(|x| x.0).collect())
        .collect();

    let mut normals: Vec<Vector3<T>> = points
        .iter()
        .zip(&neighbours)
        .map(|(p, nb)| {
            let mut nrm = plane_normal(points, nb);
            if (p - centroid).dot(&nrm) < T::zero() {
                nrm = -nrm;
            }
            nrm
        })
        .collect();

    let snapshot = normals.clone();
    let parallel: T = lit(0.7);
    for (i, nb) in neighbours.iter().enumerate() {
        let (mut agree, mut disagree) = (0usize, 0usize);
        for &j in nb.iter().filter(|&&j| j != i) {
            let d = snapshot[i].dot(&snapshot[j]);
            if d > parallel {
                agree += 1;
            } else if d < -parallel {
                disagree += 1;
            }
        }
        if disagree > agree {
            normals[i] = -snapshot[i];
        }
    }
    Ok(normals)
}

fn plane_normal<T: Real>(points: &[Point3<T>], idx: &[usize]) -> Vector3<T> {
    let m: T = lit(idx.len() as f64);
    let mean = idx
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + points[i].coords)
        / m;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i].coords - mean;
        cov += d * d.transpose();
    }
    smallest_eigenvector(cov)
}

fn smallest_eigenvector<T: Real>(cov: Matrix3<T>) -> Vector3<T> {
    let eig = SymmetricEigen::new(cov);
    let mut best = 0;
    for a in 1..3 {
        if eig.eigenvalues[a] < eig.eigenvalues[best] {
            best = a;
        }
    }
    let v: Vector3<T> = eig.eigenvectors.column(best).into_owned();
    let len = v.norm();
    if len > T::zero() {
        v / len
    } else {
        Vector3::z()
    }
}

/// Rejects clouds whose covariance has rank < 3: collinear sets have no plane,
/// and perfectly flat sets cannot be oriented outward.
fn check_extent<T: Real>(points: &[Point3<T>]) -> Result<(), SurfaceError> {
    let all: Vec<usize> = (0..points.len()).collect();
    let m: T = lit(points.len() as f64);
    let mean = all
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + points[i].coords)
        / m;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= m;
    let mut ev: Vec<T> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let largest = ev[2];
    if largest <= T::zero() {
        return Err(SurfaceError::DegenerateGeometry("all points coincide".into()));
    }
    let rel: T = lit(1e-10);
    if ev[1] <= largest * rel {
        return Err(SurfaceError::DegenerateGeometry("points are collinear".into()));
    }
    if ev[0] <= largest * rel {
        return Err(SurfaceError::DegenerateGeometry(
            "points are coplanar; normals cannot be oriented".into(),
        ));
    }
    Ok(())
}
