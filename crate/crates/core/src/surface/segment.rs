//! Supervoxel-style over-segmentation of an oriented point cloud.
//!
//! Seeds are placed on a voxel grid at the requested resolution, one per
//! normal cluster inside each occupied voxel. Every point then joins the seed
//! minimizing a weighted position + normal distance. Two patches are adjacent
//! when some pair of their points lies within one resolution of each other,
//! searched over the configured voxel stencil.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{OrientedSurface, SurfaceError};
use crate::scalar::{lit, to_f64, Real};
use crate::spatial::SpatialGrid;

/// Voxel neighbourhood used when searching for adjacent patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    fn admits(self, dx: i64, dy: i64, dz: i64) -> bool {
        let nonzero = [dx, dy, dz].iter().filter(|d| **d != 0).count();
        match self {
            Connectivity::Six => nonzero <= 1,
            Connectivity::Eighteen => nonzero <= 2,
            Connectivity::TwentySix => true,
        }
    }
}

impl TryFrom<u32> for Connectivity {
    type Error = String;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6, 18 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u32 {
    fn from(c: Connectivity) -> u32 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentOptions {
    pub connectivity: Connectivity,
    /// Weight of `1 - n_p · n_s` against squared distance in resolution units.
    pub normal_weight: f64,
    /// Report a single dominant patch as an error instead of a warning.
    pub strict_coarse: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::TwentySix,
            normal_weight: 4.0,
            strict_coarse: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Patch<T: Real> {
    pub centroid: Point3<T>,
    pub normal: Vector3<T>,
    pub members: Vec<usize>,
}

/// Segmentation result: patches partitioning the cloud plus their geometric
/// adjacency. Patches can be deactivated by graph refinement; indices stay
/// stable so downstream structures can refer to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SurfacePatchGraph<T: Real> {
    patches: Vec<Patch<T>>,
    adjacency: Vec<Vec<usize>>,
    active: Vec<bool>,
    resolution: T,
}

impl<T: Real> SurfacePatchGraph<T> {
    /// Assembles a graph from explicit parts. `edges` may be given in any order
    /// and orientation; self loops and duplicates are dropped.
    pub fn from_parts(patches: Vec<Patch<T>>, edges: &[(usize, usize)], resolution: T) -> Self {
        let n = patches.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range");
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            patches,
            adjacency,
            active: vec![true; n],
            resolution,
        }
    }

    pub fn patches(&self) -> &[Patch<T>] {
        &self.patches
    }

    pub fn patch(&self, i: usize) -> &Patch<T> {
        &self.patches[i]
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.active[i])
    }

    /// Neighbours of patch `i`, ascending.
    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Undirected edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    /// Keeps only the edges accepted by `keep`.
    pub(crate) fn retain_edges(&mut self, mut keep: impl FnMut(usize, usize) -> bool) {
        let n = self.len();
        let mut next = vec![Vec::new(); n];
        for (a, b) in self.edges() {
            if keep(a, b) {
                next[a].push(b);
                next[b].push(a);
            }
        }
        for list in &mut next {
            list.sort_unstable();
        }
        self.adjacency = next;
    }

    /// Deactivates patch `i` and drops its edges.
    pub(crate) fn deactivate(&mut self, i: usize) {
        self.active[i] = false;
        let nbrs = std::mem::take(&mut self.adjacency[i]);
        for b in nbrs {
            self.adjacency[b].retain(|&x| x != i);
        }
    }

    /// Connected-component label for every active patch (`None` for inactive
    /// ones). Labels are dense and numbered in order of lowest member index.
    pub fn components(&self) -> Vec<Option<usize>> {
        let mut label = vec![None; self.len()];
        let mut next = 0;
        for start in self.active_indices() {
            if label[start].is_some() {
                continue;
            }
            let mut stack = vec![start];
            label[start] = Some(next);
            while let Some(v) = stack.pop() {
                for &w in &self.adjacency[v] {
                    if self.active[w] && label[w].is_none() {
                        label[w] = Some(next);
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().flatten().max().map_or(0, |m| m + 1)
    }
}

/// Over-segments `surface` into patches of roughly `resolution` size.
pub fn segment<T: Real>(
    surface: &OrientedSurface<T>,
    resolution: T,
    opts: &SegmentOptions,
) -> Result<SurfacePatchGraph<T>, SurfaceError> {
    if !(resolution > T::zero()) || !resolution.is_finite() {
        return Err(SurfaceError::InvalidResolution(to_f64(resolution)));
    }
    let points = surface.points();
    let normals = surface.normals();

    let graph = if resolution >= surface.bbox().diagonal() {
        let members: Vec<usize> = (0..points.len()).collect();
        SurfacePatchGraph::from_parts(vec![make_patch(points, normals, members)], &[], resolution)
    } else {
        let grid = surface.grid(resolution);
        let seeds = place_seeds(points, normals, &grid);
        let labels = assign(points, normals, &seeds, resolution, lit(opts.normal_weight));

        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            members.entry(l).or_default().push(i);
        }
        let mut dense = vec![usize::MAX; seeds.len()];
        let mut patches = Vec::with_capacity(members.len());
        for (k, (seed, m)) in members.into_iter().enumerate() {
            dense[seed] = k;
            patches.push(make_patch(points, normals, m));
        }
        let labels: Vec<usize> = labels.into_iter().map(|l| dense[l]).collect();
        let edges = adjacent_pairs(points, &labels, &grid, resolution, opts.connectivity);
        SurfacePatchGraph::from_parts(patches, &edges, resolution)
    };

    let largest = graph.patches.iter().map(|p| p.members.len()).max().unwrap_or(0);
    let percent = 100.0 * largest as f64 / points.len() as f64;
    if percent > 90.0 {
        if opts.strict_coarse {
            return Err(SurfaceError::ResolutionTooCoarse {
                resolution: to_f64(resolution),
                percent,
            });
        }
        log::warn!(
            "resolution {} leaves one patch with {percent:.1}% of the points",
            to_f64(resolution)
        );
    }
    Ok(graph)
}

struct Seed<T: Real> {
    position: Point3<T>,
    normal: Vector3<T>,
}

const MIN_GROUP: usize = 3;

fn place_seeds<T: Real>(
    points: &[Point3<T>],
    normals: &[Vector3<T>],
    grid: &SpatialGrid<T>,
) -> Vec<Seed<T>> {
    let same_side: T = lit(0.8);
    let mut seeds = Vec::new();
    for key in grid.occupied_keys() {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in grid.cell(&key) {
            match groups
                .iter_mut()
                .find(|g| normals[g[0]].dot(&normals[i]) > same_side)
            {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        let biggest = groups.iter().map(Vec::len).max().unwrap_or(0);
        for g in groups
            .iter()
            .filter(|g| g.len() >= MIN_GROUP || g.len() == biggest)
        {
            let p = make_patch(points, normals, g.clone());
            seeds.push(Seed {
                position: p.centroid,
                normal: p.normal,
            });
        }
    }
    seeds
}

fn assign<T: Real>(
    points: &[Point3<T>],
    normals: &[Vector3<T>],
    seeds: &[Seed<T>],
    resolution: T,
    normal_weight: T,
) -> Vec<usize> {
    let positions: Vec<Point3<T>> = seeds.iter().map(|s| s.position).collect();
    let seed_grid = SpatialGrid::new(&positions, resolution);
    let inv_r2 = T::one() / (resolution * resolution);
    let reach = resolution * lit(2.0);
    points
        .iter()
        .zip(normals)
        .map(|(p, n)| {
            let mut candidates = seed_grid.within_radius(&positions, p, reach);
            if candidates.is_empty() {
                candidates = seed_grid.nearest(&positions, p).map(|x| x.0).into_iter().collect();
            }
            let mut best = (usize::MAX, T::max_value().unwrap_or(T::one() / T::zero()));
            for s in candidates {
                let d = (positions[s] - p).norm_squared() * inv_r2
                    + normal_weight * (T::one() - n.dot(&seeds[s].normal));
                if d < best.1 {
                    best = (s, d);
                }
            }
            best.0
        })
        .collect()
}

fn make_patch<T: Real>(points: &[Point3<T>], normals: &[Vector3<T>], members: Vec<usize>) -> Patch<T> {
    let m: T = lit(members.len() as f64);
    let mean = Point3::from(
        members
            .iter()
            .fold(Vector3::zeros(), |acc, &i| acc + points[i].coords)
            / m,
    );
    let mut nearest = members[0];
    let mut best = (points[nearest] - mean).norm_squared();
    for &i in &members[1..] {
        let d = (points[i] - mean).norm_squared();
        if d < best {
            best = d;
            nearest = i;
        }
    }
    let sum: Vector3<T> = members.iter().fold(Vector3::zeros(), |acc, &i| acc + normals[i]);
    let normal = if sum.norm() > lit(1e-9) {
        sum.normalize()
    } else {
        normals[nearest]
    };
    Patch {
        centroid: points[nearest],
        normal,
        members,
    }
}

fn adjacent_pairs<T: Real>(
    points: &[Point3<T>],
    labels: &[usize],
    grid: &SpatialGrid<T>,
    resolution: T,
    connectivity: Connectivity,
) -> Vec<(usize, usize)> {
    let r2 = resolution * resolution;
    // per cell: label -> member indices
    let keys = grid.occupied_keys();
    let by_label: std::collections::HashMap<_, BTreeMap<usize, Vec<usize>>> = keys
        .iter()
        .map(|k| {
            let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &i in grid.cell(k) {
                m.entry(labels[i]).or_default().push(i);
            }
            (*k, m)
        })
        .collect();

    let mut found: HashSet<(usize, usize)> = HashSet::new();
    for k in &keys {
        let here = &by_label[k];
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    if !connectivity.admits(dx, dy, dz) {
                        continue;
                    }
                    let nk = [k[0] + dx, k[1] + dy, k[2] + dz];
                    if nk < *k {
                        continue;
                    }
                    let Some(there) = by_label.get(&nk) else {
                        continue;
                    };
                    for (&la, pa) in here {
                        for (&lb, pb) in there {
                            if la == lb {
                                continue;
                            }
                            let pair = (la.min(lb), la.max(lb));
                            if found.contains(&pair) {
                                continue;
                            }
                            let close = pa.iter().any(|&i| {
                                pb.iter().any(|&j| (points[i] - points[j]).norm_squared() <= r2)
                            });
                            if close {
                                found.insert(pair);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = found.into_iter().collect();
    edges.sort_unstable();
    edges
}
