//! Uniform hash grid over a point set.
//!
//! Every proximity query in the crate (k-nearest neighbours for normal
//! estimation, radius queries for segmentation, seed lookup, ray corridors)
//! goes through this index. Query results are always returned in a
//! deterministic order so that downstream algorithms are reproducible.

use std::collections::HashMap;

use nalgebra::Point3;

use crate::scalar::{lit, Real};

pub(crate) type CellKey = [i64; 3];

#[derive(Debug, Clone)]
pub struct SpatialGrid<T: Real> {
    cell: T,
    cells: HashMap<CellKey, Vec<usize>>,
    lo: CellKey,
    hi: CellKey,
}

impl<T: Real> SpatialGrid<T> {
    /// Indexes `points` with cubic cells of edge `cell`.
    pub fn new(points: &[Point3<T>], cell: T) -> Self {
        assert!(cell > T::zero(), "grid cell size must be positive");
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let k = key_of(p, cell);
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            cells.entry(k).or_default().push(i);
        }
        if points.is_empty() {
            lo = [0; 3];
            hi = [0; 3];
        }
        Self { cell, cells, lo, hi }
    }

    pub fn cell_size(&self) -> T {
        self.cell
    }

    pub fn key(&self, p: &Point3<T>) -> CellKey {
        key_of(p, self.cell)
    }

    pub fn cell(&self, key: &CellKey) -> &[usize] {
        self.cells.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Occupied cells in ascending key order.
    pub fn occupied_keys(&self) -> Vec<CellKey> {
        let mut keys: Vec<CellKey> = self.cells.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    /// Indices of all points within `radius` of `q`, ascending.
    pub fn within_radius(&self, points: &[Point3<T>], q: &Point3<T>, radius: T) -> Vec<usize> {
        let reach = ceil_cells(radius, self.cell);
        let c = self.key(q);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let k = [c[0] + dx, c[1] + dy, c[2] + dz];
                    for &i in self.cell(&k) {
                        if (points[i] - q).norm_squared() <= r2 {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` points closest to `q` as `(index, distance)`, nearest first with
    /// ties broken by index.
    pub fn nearest_k(&self, points: &[Point3<T>], q: &Point3<T>, k: usize) -> Vec<(usize, T)> {
        if k == 0 || self.cells.is_empty() {
            return Vec::new();
        }
        let c = self.key(q);
        let max_ring = (0..3)
            .map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut found: Vec<(usize, T)> = Vec::new();
        let mut ring = 0i64;
        loop {
            for_ring(c, ring, |key| {
                for &i in self.cell(&key) {
                    found.push((i, (points[i] - q).norm()));
                }
            });
            if found.len() >= k {
                sort_by_distance(&mut found);
                let kth = found[k - 1].1;
                if kth <= self.cell * lit::<T>(ring as f64) || ring >= max_ring {
                    found.truncate(k);
                    return found;
                }
            } else if ring >= max_ring {
                sort_by_distance(&mut found);
                return found;
            }
            ring += 1;
        }
    }

    pub fn nearest(&self, points: &[Point3<T>], q: &Point3<T>) -> Option<(usize, T)> {
        self.nearest_k(points, q, 1).into_iter().next()
    }
}

fn sort_by_distance<T: Real>(v: &mut [(usize, T)]) {
    v.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
}

pub(crate) fn key_of<T: Real>(p: &Point3<T>, cell: T) -> CellKey {
    let f = |x: T| (x / cell).floor().to_i64().unwrap_or(0);
    [f(p.x), f(p.y), f(p.z)]
}

pub(crate) fn ceil_cells<T: Real>(radius: T, cell: T) -> i64 {
    (radius / cell).ceil().to_i64().unwrap_or(1).max(1)
}

/// Visits every cell on the surface of the Chebyshev ball of radius `ring`.
fn for_ring(c: CellKey, ring: i64, mut f: impl FnMut(CellKey)) {
    if ring == 0 {
        f(c);
        return;
    }
    for dx in -ring..=ring {
        for dy in -ring..=ring {
            let on_face = dx.abs() == ring || dy.abs() == ring;
            if on_face {
                for dz in -ring..=ring {
                    f([c[0] + dx, c[1] + dy, c[2] + dz]);
                }
            } else {
                f([c[0] + dx, c[1] + dy, c[2] - ring]);
                f([c[0] + dx, c[1] + dy, c[2] + ring]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.2..0.2),
                )
            })
            .collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let pts = cloud(500, 7);
        let grid = SpatialGrid::new(&pts, 0.13);
        for q in cloud(40, 8) {
            let got = grid.nearest_k(&pts, &q, 9);
            let mut all: Vec<(usize, f64)> =
                pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm())).collect();
            sort_by_distance(&mut all);
            assert_eq!(
                got.iter().map(|x| x.0).collect::<Vec<_>>(),
                all[..9].iter().map(|x| x.0).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn radius_matches_brute_force() {
        let pts = cloud(400, 3);
        let grid = SpatialGrid::new(&pts, 0.1);
        let q = Point3::new(0.1, -0.2, 0.0);
        let got = grid.within_radius(&pts, &q, 0.27);
        let want: Vec<usize> = (0..pts.len())
            .filter(|&i| (pts[i] - q).norm() <= 0.27)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn knn_with_fewer_points_than_k() {
        let pts = cloud(5, 1);
        let grid = SpatialGrid::new(&pts, 0.05);
        assert_eq!(grid.nearest_k(&pts, &Point3::origin(), 10).len(), 5);
    }
}
