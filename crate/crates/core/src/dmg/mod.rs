//! The Dexterous Manipulation Graph: contact patches paired with runs of
//! collision-free finger angles, joined where a finger can slide between
//! neighbouring patches without changing orientation.

mod admissible;
pub mod angles;
mod export;

use std::collections::VecDeque;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admissible::{admissible_angles, angle_of, finger_direction, FingerModel};
pub use angles::{discretize, split_components, AngularComponent};

use crate::scalar::{lit, to_f64, Real};
use crate::surface::{OrientedSurface, SurfacePatchGraph};

/// Current version of the JSON document produced by [`Dmg::to_json`].
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DmgError {
    #[error("every patch was eliminated; the graph is empty")]
    EmptyGraph,
    #[error("invalid finger model: {0}")]
    InvalidFinger(String),
    #[error("normal threshold must lie in (0, 2], got {0}")]
    InvalidDelta(f64),
    #[error("malformed graph document: {0}")]
    Malformed(String),
    #[error("unsupported graph document version {0}")]
    UnsupportedVersion(u32),
}

/// Index of a node in [`Dmg::nodes`].
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DmgNode<T: Real> {
    /// Source patch in the segmentation.
    pub patch: usize,
    /// Index of this node's run among the patch's runs.
    pub component_index: usize,
    pub contact: Point3<T>,
    pub normal: Vector3<T>,
    pub angles: AngularComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dmg<T: Real> {
    version: u32,
    finger: FingerModel<T>,
    delta: T,
    resolution: T,
    nodes: Vec<DmgNode<T>>,
    /// Neighbour lists, ascending.
    adjacency: Vec<Vec<NodeId>>,
    /// Connected-component label per node.
    components: Vec<usize>,
    component_count: usize,
    /// Connected components of the refined patch graph.
    patch_component_count: usize,
    /// Patches dropped for having no admissible angle.
    blocked_patches: Vec<usize>,
    /// Patches dropped because normal refinement left them without neighbours.
    isolated_patches: Vec<usize>,
}

/// Removes adjacency between patches whose normals differ by more than
/// `delta` and drops patches left without neighbours.
pub fn refine_by_normals<T: Real>(
    graph: &SurfacePatchGraph<T>,
    delta: T,
) -> SurfacePatchGraph<T> {
    let mut g = graph.clone();
    g.retain_edges(|a, b| (graph.patch(a).normal - graph.patch(b).normal).norm() <= delta);
    let lonely: Vec<usize> = g
        .active_indices()
        .filter(|&i| g.neighbours(i).is_empty())
        .collect();
    for i in lonely {
        g.deactivate(i);
    }
    g
}

/// Builds the graph from a segmentation of `surface`.
pub fn build_dmg<T: Real>(
    graph: &SurfacePatchGraph<T>,
    surface: &OrientedSurface<T>,
    finger: &FingerModel<T>,
    delta: T,
) -> Result<Dmg<T>, DmgError> {
    finger.validate()?;
    if !(delta > T::zero() && delta <= lit(2.0)) {
        return Err(DmgError::InvalidDelta(to_f64(delta)));
    }
    let mut refined = refine_by_normals(graph, delta);
    let isolated_patches: Vec<usize> = (0..graph.len())
        .filter(|&i| graph.is_active(i) && !refined.is_active(i))
        .collect();

    let mut runs: Vec<Vec<AngularComponent>> = vec![Vec::new(); graph.len()];
    let mut blocked_patches = Vec::new();
    let candidates: Vec<usize> = refined.active_indices().collect();
    for i in candidates {
        let patch = refined.patch(i);
        let set = admissible_angles(surface, &patch.centroid, &patch.normal, finger);
        if set.is_empty() {
            blocked_patches.push(i);
            refined.deactivate(i);
        } else {
            runs[i] = split_components(&set, finger.angle_step);
        }
    }
    if refined.active_count() == 0 {
        return Err(DmgError::EmptyGraph);
    }
    log::debug!(
        "{} patches kept, {} isolated, {} blocked",
        refined.active_count(),
        isolated_patches.len(),
        blocked_patches.len()
    );

    let mut nodes = Vec::new();
    let mut first_node = vec![usize::MAX; graph.len()];
    for i in refined.active_indices() {
        first_node[i] = nodes.len();
        let patch = refined.patch(i);
        for (j, run) in runs[i].iter().enumerate() {
            nodes.push(DmgNode {
                patch: i,
                component_index: j,
                contact: patch.centroid,
                normal: patch.normal,
                angles: *run,
            });
        }
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (v, w) in refined.edges() {
        for (j, a) in runs[v].iter().enumerate() {
            for (k, b) in runs[w].iter().enumerate() {
                if a.intersects(b) {
                    let (n, m) = (first_node[v] + j, first_node[w] + k);
                    adjacency[n].push(m);
                    adjacency[m].push(n);
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    let (components, component_count) = label_components(&adjacency);

    Ok(Dmg {
        version: FORMAT_VERSION,
        finger: *finger,
        delta,
        resolution: graph.resolution(),
        nodes,
        adjacency,
        components,
        component_count,
        patch_component_count: refined.component_count(),
        blocked_patches,
        isolated_patches,
    })
}

fn label_components(adjacency: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; adjacency.len()];
    let mut next = 0;
    for s in 0..adjacency.len() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if label[w] == usize::MAX {
                    label[w] = next;
                    queue.push_back(w);
                }
            }
        }
        next += 1;
    }
    (label, next)
}

impl<T: Real> Dmg<T> {
    pub fn nodes(&self) -> &[DmgNode<T>] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &DmgNode<T> {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbours(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id]
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn component(&self, id: NodeId) -> usize {
        self.components[id]
    }

    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn patch_component_count(&self) -> usize {
        self.patch_component_count
    }

    pub fn finger(&self) -> &FingerModel<T> {
        &self.finger
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn blocked_patches(&self) -> &[usize] {
        &self.blocked_patches
    }

    pub fn isolated_patches(&self) -> &[usize] {
        &self.isolated_patches
    }

    /// Nodes created for patch `patch`, in run order.
    pub fn nodes_of_patch(&self, patch: usize) -> impl Iterator<Item = NodeId> + '_ {
        let start = self.nodes.partition_point(|n| n.patch < patch);
        (start..self.nodes.len()).take_while(move |&i| self.nodes[i].patch == patch)
    }

    /// Node ids in component `label`, ascending.
    pub fn component_members(&self, label: usize) -> Vec<NodeId> {
        (0..self.len()).filter(|&i| self.components[i] == label).collect()
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<(), DmgError> {
        let bad = |m: String| Err(DmgError::Malformed(m));
        let n = self.nodes.len();
        if self.adjacency.len() != n || self.components.len() != n {
            return bad("per-node tables disagree in length".into());
        }
        for (a, list) in self.adjacency.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("neighbours of node {a} are not strictly ascending"));
            }
            for &b in list {
                if b >= n || b == a || !self.has_edge(b, a) {
                    return bad(format!("edge ({a}, {b}) is not symmetric"));
                }
                if self.nodes[a].patch == self.nodes[b].patch {
                    return bad(format!("nodes {a} and {b} share a contact"));
                }
            }
        }
        if self.nodes.windows(2).any(|w| {
            (w[0].patch, w[0].component_index) >= (w[1].patch, w[1].component_index)
        }) {
            return bad("nodes are not ordered by (patch, run)".into());
        }
        let step = self.finger.angle_step;
        if self
            .nodes
            .iter()
            .any(|nd| nd.angles.step != step || nd.angles.count == 0 || nd.angles.count * step > 360)
        {
            return bad("angle run inconsistent with the finger step".into());
        }
        let (labels, count) = label_components(&self.adjacency);
        if labels != self.components || count != self.component_count {
            return bad("component labels do not match the edges".into());
        }
        Ok(())
    }
}
