//! Pairwise in-hand reachability between sampled gripper poses.
//!
//! Entry `(i, j)` of the matrix is set when the planner can move the gripper
//! from pose `i` to pose `j` without releasing the object. Connected blocks
//! of the matrix are areas the gripper can traverse; a pose outside every
//! block of interest needs a regrasp.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::{self, Write};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmg::{discretize, Dmg, NodeId};
use crate::planner::{snap_oriented, CostWeights, Rejection, SearchOptions, SearchSpace, State};
use crate::scalar::{to_f64, Real};
use crate::surface::{Aabb, OrientedSurface};

#[derive(Debug, Error, PartialEq)]
pub enum ManipulabilityError {
    #[error("no sampled pose is valid")]
    NoValidPoses,
    #[error("grid step must be positive and angle step must divide 360")]
    InvalidSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleRejection {
    /// No graph node lies close to the grid point.
    NoNearbyNode,
    /// Nodes are nearby but none admits the finger angle.
    AngleNotAdmissible,
    /// Same node and angle as an earlier valid sample.
    Duplicate,
    Secondary(Rejection),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PoseSample<T: Real> {
    /// Grid point the sample was generated from.
    pub grid_point: Point3<T>,
    pub contact: Point3<T>,
    pub angle: u32,
    pub closing_dir: Vector3<T>,
    pub node: Option<NodeId>,
    pub secondary_node: Option<NodeId>,
    pub rejection: Option<SampleRejection>,
}

impl<T: Real> PoseSample<T> {
    pub fn is_valid(&self) -> bool {
        self.rejection.is_none()
    }

    fn state(&self) -> State {
        State {
            node: self.node.expect("valid sample"),
            angle: self.angle,
            rotated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions<T: Real> {
    pub grid_step: T,
    pub angle_step: u32,
    pub max_aperture: T,
}

/// Grid points over the bounding box crossed with an angle sweep, each
/// snapped to a node and checked for a secondary finger along the inward
/// normal of that node.
pub fn sample_poses<T: Real>(
    dmg: &Dmg<T>,
    surface: &OrientedSurface<T>,
    opts: &SamplingOptions<T>,
) -> Result<Vec<PoseSample<T>>, ManipulabilityError> {
    if !(opts.grid_step > T::zero()) || opts.angle_step == 0 || 360 % opts.angle_step != 0 {
        return Err(ManipulabilityError::InvalidSampling);
    }
    let bbox = surface.bbox();
    // both ends of every axis are sampled, so thin parts keep their faces
    let counts: Vec<usize> = (0..3)
        .map(|a| (bbox.extent()[a] / opts.grid_step).ceil().to_usize().unwrap_or(0) + 1)
        .collect();
    let spacing: Vec<T> = (0..3)
        .map(|a| match counts[a] {
            1 => T::zero(),
            c => bbox.extent()[a] / T::from_usize(c - 1).unwrap(),
        })
        .collect();
    let search = SearchOptions {
        weights: CostWeights::uniform(),
        max_aperture: opts.max_aperture,
        ignore_secondary: false,
    };
    let mut spaces: HashMap<NodeId, SearchSpace<'_, T>> = HashMap::new();
    let mut seen: HashMap<(NodeId, u32), usize> = HashMap::new();
    let mut out = Vec::new();
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                let g = bbox.min
                    + Vector3::new(
                        spacing[0] * T::from_usize(i).unwrap(),
                        spacing[1] * T::from_usize(j).unwrap(),
                        spacing[2] * T::from_usize(k).unwrap(),
                    );
                let (pi, dist) = surface.nearest(&g);
                let normal = surface.normals()[pi];
                let near = dist <= opts.grid_step;
                for a in (0..360).step_by(opts.angle_step as usize) {
                    let mut s = PoseSample {
                        grid_point: g,
                        contact: g,
                        angle: a,
                        closing_dir: -normal,
                        node: None,
                        secondary_node: None,
                        rejection: None,
                    };
                    if !near {
                        s.rejection = Some(SampleRejection::NoNearbyNode);
                        out.push(s);
                        continue;
                    }
                    let node = match snap_oriented(dmg, &g, a as f64, Some(&normal)) {
                        Ok(n) => n,
                        Err(_) => {
                            s.rejection = Some(SampleRejection::AngleNotAdmissible);
                            out.push(s);
                            continue;
                        }
                    };
                    let nd = dmg.node(node);
                    s.node = Some(node);
                    s.contact = nd.contact;
                    s.closing_dir = -nd.normal;
                    let angle = discretize(a as f64, dmg.finger().angle_step);
                    s.angle = angle;
                    if seen.contains_key(&(node, angle)) {
                        s.rejection = Some(SampleRejection::Duplicate);
                        out.push(s);
                        continue;
                    }
                    let space = spaces
                        .entry(node)
                        .or_insert_with(|| SearchSpace::new(dmg, surface, -nd.normal, search));
                    match space.secondary(node, angle) {
                        Ok(sec) => {
                            s.secondary_node = sec.node;
                            seen.insert((node, angle), out.len());
                        }
                        Err(r) => s.rejection = Some(SampleRejection::Secondary(r)),
                    }
                    out.push(s);
                }
            }
        }
    }
    if !out.iter().any(PoseSample::is_valid) {
        return Err(ManipulabilityError::NoValidPoses);
    }
    Ok(out)
}

/// Binary symmetric reachability matrix over the valid samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulabilityMatrix {
    size: usize,
    /// Index into the sample list for each row.
    rows: Vec<usize>,
    entries: Vec<u8>,
    /// Row order that makes every block contiguous.
    permutation: Vec<usize>,
    /// Block id per row, 0 for the largest block.
    labels: Vec<usize>,
    block_count: usize,
}

/// Fills the matrix by exploring, for every distinct start condition, the
/// configurations reachable in the planner's state space.
pub fn build_matrix<T: Real>(
    dmg: &Dmg<T>,
    surface: &OrientedSurface<T>,
    samples: &[PoseSample<T>],
    max_aperture: T,
) -> ManipulabilityMatrix {
    let rows: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].is_valid()).collect();
    let n = rows.len();
    let mut entries = vec![0u8; n * n];
    let search = SearchOptions {
        weights: CostWeights::uniform(),
        max_aperture,
        ignore_secondary: false,
    };
    // samples with the same closing direction and secondary component share a
    // state space, so one exploration labels all of them
    type Key = ([u64; 3], usize);
    let key = |s: &PoseSample<T>| -> Key {
        let c = s.closing_dir.map(|x| to_f64(x).to_bits());
        ([c.x, c.y, c.z], dmg.component(s.secondary_node.expect("valid")))
    };
    let mut groups: HashMap<Key, Vec<usize>> = HashMap::new();
    for (r, &i) in rows.iter().enumerate() {
        groups.entry(key(&samples[i])).or_default().push(r);
    }
    for r in 0..n {
        let s = &samples[rows[r]];
        let (closing, cs) = (s.closing_dir, dmg.component(s.secondary_node.unwrap()));
        let space = SearchSpace::new(dmg, surface, closing, search).with_secondary_component(cs);
        let reach = reachable(&space, s.state());
        for c in (r + 1)..n {
            let t = &samples[rows[c]];
            if reach.contains_key(&(t.node.unwrap(), t.angle)) {
                entries[r * n + c] = 1;
                entries[c * n + r] = 1;
            }
        }
    }
    let mut m = ManipulabilityMatrix {
        size: n,
        rows,
        entries,
        permutation: Vec::new(),
        labels: Vec::new(),
        block_count: 0,
    };
    m.order();
    m
}

/// Every (node, angle) reachable from `start`, rotations and translations
/// alike.
fn reachable<T: Real>(space: &SearchSpace<'_, T>, start: State) -> HashMap<(NodeId, u32), ()> {
    let mut seen = HashMap::new();
    seen.insert((start.node, start.angle), ());
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for (t, _, _) in space.transitions(s) {
            if seen.insert((t.node, t.angle), ()).is_none() {
                queue.push_back(State { rotated: false, ..t });
            }
        }
    }
    seen
}

/// Connected components of a symmetric 0/1 matrix, ordered by size
/// (largest first) then lowest member. Returns the row permutation and the
/// block label of every row.
pub fn order_blocks(entries: &[u8], size: usize) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; size];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for s in 0..size {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = members.len();
        comp[s] = id;
        let mut list = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..size {
                if entries[u * size + v] != 0 && comp[v] == usize::MAX {
                    comp[v] = id;
                    list.push(v);
                    queue.push_back(v);
                }
            }
        }
        list.sort_unstable();
        members.push(list);
    }
    members.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut labels = vec![0; size];
    let mut perm = Vec::with_capacity(size);
    for (block, list) in members.iter().enumerate() {
        for &i in list {
            labels[i] = block;
            perm.push(i);
        }
    }
    (perm, labels)
}

impl ManipulabilityMatrix {
    /// Builds a matrix directly from entries over `size` rows mapped to
    /// samples `rows`.
    pub fn from_entries(rows: Vec<usize>, entries: Vec<u8>) -> Self {
        let size = rows.len();
        assert_eq!(entries.len(), size * size);
        let mut m = Self {
            size,
            rows,
            entries,
            permutation: Vec::new(),
            labels: Vec::new(),
            block_count: 0,
        };
        for i in 0..size {
            m.entries[i * size + i] = 0;
        }
        m.order();
        m
    }

    fn order(&mut self) {
        let (perm, labels) = order_blocks(&self.entries, self.size);
        self.block_count = labels.iter().max().map_or(0, |m| m + 1);
        self.permutation = perm;
        self.labels = labels;
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.size + j] != 0
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// Sample index of row `i`.
    pub fn sample_of(&self, i: usize) -> usize {
        self.rows[i]
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Rows of the matrix in block order, as comma separated 0/1.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.size * self.size * 2);
        for &i in &self.permutation {
            let row: Vec<&str> = self
                .permutation
                .iter()
                .map(|&j| if self.get(i, j) { "1" } else { "0" })
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Binary greyscale image in block order: white where reachable.
    pub fn write_pgm(&self, w: &mut impl Write) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.size, self.size)?;
        let mut pixels = Vec::with_capacity(self.size * self.size);
        for &i in &self.permutation {
            pixels.extend(self.permutation.iter().map(|&j| if self.get(i, j) { 255u8 } else { 0 }));
        }
        w.write_all(&pixels)
    }

    /// Sidecar describing each image row: its sample and block.
    pub fn sidecar<T: Real>(&self, samples: &[PoseSample<T>]) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .permutation
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let s = &samples[self.rows[i]];
                serde_json::json!({
                    "row": r,
                    "sample": self.rows[i],
                    "block": self.labels[i],
                    "node": s.node,
                    "contact": [to_f64(s.contact.x), to_f64(s.contact.y), to_f64(s.contact.z)],
                    "angle": s.angle,
                    "closing_dir": [to_f64(s.closing_dir.x), to_f64(s.closing_dir.y), to_f64(s.closing_dir.z)],
                })
            })
            .collect();
        serde_json::json!({ "size": self.size, "blocks": self.block_count, "rows": rows })
    }
}

/// Parses a matrix written by [`ManipulabilityMatrix::to_csv`].
pub fn read_csv(text: &str) -> Result<Vec<Vec<u8>>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| match c.trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(format!("unexpected cell `{other}`")),
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RegraspArea<T: Real> {
    pub block: usize,
    pub size: usize,
    pub bbox: Aabb<T>,
    /// Sample indices, the block medoid first.
    pub representatives: Vec<usize>,
    /// Graph components touched by the block.
    pub components: Vec<usize>,
}

/// Summary per block: contact extent and `k` representative poses chosen
/// medoid first, then by farthest-point sampling.
pub fn report_regrasp_areas<T: Real>(
    matrix: &ManipulabilityMatrix,
    samples: &[PoseSample<T>],
    dmg: &Dmg<T>,
    k: usize,
) -> Vec<RegraspArea<T>> {
    let mut out = Vec::with_capacity(matrix.block_count());
    for block in 0..matrix.block_count() {
        let members: Vec<usize> = (0..matrix.size())
            .filter(|&i| matrix.labels()[i] == block)
            .map(|i| matrix.sample_of(i))
            .collect();
        let pts: Vec<Point3<T>> = members.iter().map(|&s| samples[s].contact).collect();
        let bbox = Aabb::from_points(&pts).expect("blocks are nonempty");
        let dist = |a: usize, b: usize| (pts[a] - pts[b]).norm();
        let medoid = (0..pts.len())
            .min_by(|&a, &b| {
                let sa = (0..pts.len()).fold(T::zero(), |acc, x| acc + dist(a, x));
                let sb = (0..pts.len()).fold(T::zero(), |acc, x| acc + dist(b, x));
                sa.partial_cmp(&sb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty");
        let mut chosen = vec![medoid];
        while chosen.len() < k.min(pts.len()) {
            let next = (0..pts.len())
                .filter(|i| !chosen.contains(i))
                .max_by(|&a, &b| {
                    let da = chosen.iter().map(|&c| dist(a, c)).fold(T::max_value().unwrap(), |x, y| x.min(y));
                    let db = chosen.iter().map(|&c| dist(b, c)).fold(T::max_value().unwrap(), |x, y| x.min(y));
                    da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
                })
                .expect("more points remain");
            chosen.push(next);
        }
        let mut components: Vec<usize> = members
            .iter()
            .map(|&s| dmg.component(samples[s].node.expect("valid")))
            .collect();
        components.sort_unstable();
        components.dedup();
        out.push(RegraspArea {
            block,
            size: members.len(),
            bbox,
            representatives: chosen.into_iter().map(|i| members[i]).collect(),
            components,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmg::{build_dmg, FingerModel};
    use crate::planner::{GraspState, Planner, PlannerOptions};
    use crate::shapes::{self, SlotDims};
    use crate::surface::{segment, SegmentOptions};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn setup(s: &OrientedSurface<f64>) -> Dmg<f64> {
        let g = segment(s, 0.013, &SegmentOptions::default()).unwrap();
        build_dmg(&g, s, &FingerModel::default(), 0.07).unwrap()
    }

    fn opts(step: f64, angle: u32) -> SamplingOptions<f64> {
        SamplingOptions {
            grid_step: step,
            angle_step: angle,
            max_aperture: 0.15,
        }
    }

    /// Reference: plan every pair with the planner, then BFS the result.
    fn oracle_labels(
        d: &Dmg<f64>,
        s: &OrientedSurface<f64>,
        samples: &[PoseSample<f64>],
        m: &ManipulabilityMatrix,
    ) -> Vec<usize> {
        let p = Planner::new(d, s, PlannerOptions::default());
        let n = m.size();
        let mut e = vec![0u8; n * n];
        for i in 0..n {
            let a = &samples[m.sample_of(i)];
            let nd = d.node(a.node.unwrap());
            let start = GraspState {
                principal_node: a.node.unwrap(),
                principal_angle: a.angle,
                principal_contact: nd.contact,
                principal_normal: nd.normal,
                secondary_node: a.secondary_node,
                secondary_contact: nd.contact,
                secondary_angle: 0,
                opening: 0.0,
                closing_dir: a.closing_dir,
            };
            for j in (i + 1)..n {
                let b = &samples[m.sample_of(j)];
                if p.plan_from(&start, b.node.unwrap(), b.angle, None).is_ok() {
                    e[i * n + j] = 1;
                    e[j * n + i] = 1;
                }
            }
        }
        // plain BFS labelling, numbered by first member
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for r in 0..n {
            if label[r] != usize::MAX {
                continue;
            }
            let mut stack = vec![r];
            label[r] = next;
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if e[u * n + v] == 1 && label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.len() == b.len()
            && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn empty_corners_are_rejected() {
        let s = shapes::box_surface::<f64>(0.1, 0.1, 0.1, 0.004);
        let d = setup(&s);
        let samples = sample_poses(&d, &s, &opts(0.026, 90)).unwrap();
        assert!(samples
            .iter()
            .any(|p| p.rejection == Some(SampleRejection::NoNearbyNode)));
        assert!(samples.iter().any(PoseSample::is_valid));
        // valid samples pair across the thickness
        for p in samples.iter().filter(|p| p.is_valid()) {
            let sec = d.node(p.secondary_node.unwrap());
            assert!(sec.normal.dot(&p.closing_dir) > 0.5);
        }
    }

    #[test]
    fn bad_sampling_parameters() {
        let s = shapes::box_surface::<f64>(0.1, 0.1, 0.02, 0.004);
        let d = setup(&s);
        assert_eq!(
            sample_poses(&d, &s, &opts(0.0, 90)).unwrap_err(),
            ManipulabilityError::InvalidSampling
        );
        assert_eq!(
            sample_poses(&d, &s, &opts(0.02, 7)).unwrap_err(),
            ManipulabilityError::InvalidSampling
        );
    }

    #[test]
    fn rejected_angles_agree_with_admissibility() {
        // long plate, short clearance wall at one end: angles towards it fail
        use crate::shapes::{Cuboid, Solid};
        let plate = Cuboid::new(Point3::new(-0.15, -0.03, -0.005), Point3::new(0.15, 0.03, 0.005));
        let wall = Cuboid::new(Point3::new(0.13, -0.03, 0.005), Point3::new(0.15, 0.03, 0.04));
        let s = Solid::union(vec![plate, wall]).sample(0.0025);
        let d = setup(&s);
        let samples = sample_poses(&d, &s, &opts(0.026, 30)).unwrap();
        let rejected: Vec<&PoseSample<f64>> = samples
            .iter()
            .filter(|p| p.rejection == Some(SampleRejection::AngleNotAdmissible))
            .collect();
        assert!(!rejected.is_empty());
        for p in rejected {
            let (pi, _) = s.nearest(&p.grid_point);
            let n = s.normals()[pi];
            // no nearby node facing this way admits the angle
            let list = crate::planner::snap_oriented(&d, &p.grid_point, p.angle as f64, Some(&n));
            assert!(list.is_err());
        }
    }

    #[test]
    fn one_face_is_one_block() {
        let s = shapes::box_surface::<f64>(0.1, 0.1, 0.02, 0.002);
        let d = setup(&s);
        let samples: Vec<PoseSample<f64>> = sample_poses(&d, &s, &opts(0.026, 90))
            .unwrap()
            .into_iter()
            .filter(|p| p.is_valid() && p.closing_dir.z < -0.9)
            .collect();
        let m = build_matrix(&d, &s, &samples, 0.15);
        assert_eq!(m.block_count(), 1);
        for i in 0..m.size() {
            for j in 0..m.size() {
                assert_eq!(m.get(i, j), i != j);
            }
        }
    }

    #[test]
    fn matrix_properties_and_oracle() {
        let s = shapes::two_cubes::<f64>(0.05, 0.1, 0.0025);
        let d = setup(&s);
        let all = sample_poses(&d, &s, &opts(0.03, 120)).unwrap();
        let valid: Vec<PoseSample<f64>> = all.into_iter().filter(|p| p.is_valid()).take(60).collect();
        let m = build_matrix(&d, &s, &valid, 0.15);
        assert!(m.is_symmetric());
        assert!((0..m.size()).all(|i| !m.get(i, i)));
        let want = oracle_labels(&d, &s, &valid, &m);
        assert!(same_partition(m.labels(), &want));
        let mut comps: Vec<usize> = valid.iter().map(|p| d.component(p.node.unwrap())).collect();
        comps.sort_unstable();
        comps.dedup();
        assert!(m.block_count() >= comps.len());
        for i in 0..m.size() {
            for j in 0..m.size() {
                if m.get(i, j) {
                    assert_eq!(m.labels()[i], m.labels()[j]);
                }
            }
        }
        let areas = report_regrasp_areas(&m, &valid, &d, 3);
        assert_eq!(areas.len(), m.block_count());
        assert_eq!(areas.iter().map(|a| a.size).sum::<usize>(), m.size());
    }

    #[test]
    fn shuffled_two_block_matrix_is_recovered() {
        let n = 10;
        let mut e = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && (i < 6) == (j < 6) {
                    e[i * n + j] = 1;
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let mut shuffled = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                shuffled[i * n + j] = e[order[i] * n + order[j]];
            }
        }
        let (perm, labels) = order_blocks(&shuffled, n);
        let first: Vec<usize> = perm[..6].to_vec();
        assert!(first.iter().all(|&i| labels[i] == 0 && order[i] < 6));
        assert!(perm[6..].iter().all(|&i| labels[i] == 1 && order[i] >= 6));
        // original order is kept inside a block
        assert!(first.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_matrix_gives_singletons() {
        let (perm, labels) = order_blocks(&[0; 16], 4);
        assert_eq!(perm, vec![0, 1, 2, 3]);
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn exports_round_trip() {
        let rows = vec![0, 1, 2];
        let e = vec![0, 1, 0, 1, 0, 0, 0, 0, 0];
        let m = ManipulabilityMatrix::from_entries(rows, e);
        let back = read_csv(&m.to_csv()).unwrap();
        for (i, row) in back.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, back[j][i]);
                assert_eq!(v == 1, m.get(m.permutation()[i], m.permutation()[j]));
            }
        }
        let mut pgm = Vec::new();
        m.write_pgm(&mut pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(pgm.len(), b"P5\n3 3\n255\n".len() + 9);
    }

    #[test]
    fn groove_splits_one_face_into_two_blocks() {
        let dims = SlotDims {
            length: 0.2,
            width: 0.06,
            thickness: 0.04,
            slot_length: 0.04,
            slot_width: 0.06,
            slot_depth: 0.025,
        };
        let s = shapes::plate_with_slot::<f64>(&dims, 0.0025);
        let d = setup(&s);
        let samples: Vec<PoseSample<f64>> = sample_poses(&d, &s, &opts(0.02, 90))
            .unwrap()
            .into_iter()
            .filter(|p| p.is_valid() && p.closing_dir.z < -0.9 && p.contact.z > 0.019)
            .collect();
        let m = build_matrix(&d, &s, &samples, 0.15);
        let top: Vec<usize> = samples.iter().map(|p| d.component(p.node.unwrap())).collect();
        assert!(top.iter().all(|&c| c == top[0]), "top face is one component");
        assert!(m.block_count() >= 2, "blocks {}", m.block_count());
        let areas = report_regrasp_areas(&m, &samples, &d, 2);
        let sharing = areas.iter().filter(|a| a.components.contains(&top[0])).count();
        assert!(sharing >= 2);
        // the two areas sit on either side of the groove
        assert!(areas[0].bbox.max.x < 0.0 || areas[0].bbox.min.x > 0.0);
    }
}
