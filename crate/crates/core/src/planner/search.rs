//! Grasp state space and shortest-path search.
//!
//! A search state is a principal node, a finger angle inside the node's run
//! and whether the gripper has already rotated since the last translation.
//! Allowing at most one rotation between translations keeps the excess
//! rotation penalty from being split across several cheaper turns.

use std::cell::{Cell, OnceCell, RefCell};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{push_face, CostWeights, PlanDiagnostics};
use crate::dmg::{angle_of, discretize, finger_direction, Dmg, NodeId};
use crate::scalar::{lit, to_f64, OrdScalar, Real};
use crate::surface::{ray_intersect, OrientedSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub node: NodeId,
    pub angle: u32,
    pub rotated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Move {
    Rotate(i32),
    Translate,
}

/// Why a principal configuration cannot be paired with a secondary finger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    RayMiss,
    ApertureExceeded,
    NoSecondaryNode,
    OutsideSecondaryComponent,
}

/// Secondary finger placement for a principal configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Secondary<T: Real> {
    pub node: Option<NodeId>,
    pub contact: Point3<T>,
    pub angle: u32,
    pub opening: T,
}

#[derive(Debug, Clone)]
enum Probe<T: Real> {
    Miss,
    Wide(T),
    Hit {
        contact: Point3<T>,
        opening: T,
        /// Nodes near the exit point facing along the closing direction,
        /// nearest first.
        shortlist: Vec<NodeId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions<T: Real> {
    pub weights: CostWeights<T>,
    pub max_aperture: T,
    /// Treat every configuration as valid, ignoring the secondary finger.
    pub ignore_secondary: bool,
}

pub struct SearchSpace<'a, T: Real> {
    dmg: &'a Dmg<T>,
    surface: &'a OrientedSurface<T>,
    options: SearchOptions<T>,
    closing: Vector3<T>,
    secondary_component: Option<usize>,
    base: Vec<usize>,
    total: usize,
    probes: Vec<OnceCell<Probe<T>>>,
    pulls: RefCell<HashMap<(NodeId, NodeId), bool>>,
    rejected_secondary: Cell<usize>,
    rejected_aperture: Cell<usize>,
}

impl<'a, T: Real> SearchSpace<'a, T> {
    pub fn new(
        dmg: &'a Dmg<T>,
        surface: &'a OrientedSurface<T>,
        closing: Vector3<T>,
        options: SearchOptions<T>,
    ) -> Self {
        let mut base = Vec::with_capacity(dmg.len());
        let mut total = 0;
        for n in dmg.nodes() {
            base.push(total);
            total += 2 * n.angles.count as usize;
        }
        Self {
            dmg,
            surface,
            options,
            closing: closing.normalize(),
            secondary_component: None,
            base,
            total,
            probes: (0..dmg.len()).map(|_| OnceCell::new()).collect(),
            pulls: RefCell::new(HashMap::new()),
            rejected_secondary: Cell::new(0),
            rejected_aperture: Cell::new(0),
        }
    }

    /// Fixes the component the secondary finger must stay in.
    pub fn with_secondary_component(mut self, label: usize) -> Self {
        self.secondary_component = Some(label);
        self
    }

    pub fn dmg(&self) -> &Dmg<T> {
        self.dmg
    }

    pub fn closing(&self) -> Vector3<T> {
        self.closing
    }

    pub fn options(&self) -> &SearchOptions<T> {
        &self.options
    }

    pub fn state_count(&self) -> usize {
        self.total
    }

    pub fn index(&self, s: State) -> usize {
        let off = self.dmg.node(s.node).angles.offset(s.angle).expect("angle inside run") as usize;
        self.base[s.node] + 2 * off + s.rotated as usize
    }

    pub fn state(&self, index: usize) -> State {
        let node = self.base.partition_point(|&b| b <= index) - 1;
        let rem = index - self.base[node];
        let run = &self.dmg.node(node).angles;
        State {
            node,
            angle: (run.start + (rem as u32 / 2) * run.step) % 360,
            rotated: rem % 2 == 1,
        }
    }

    fn probe(&self, node: NodeId) -> &Probe<T> {
        self.probes[node].get_or_init(|| {
            let res = self.dmg.resolution();
            let from = self.dmg.node(node).contact;
            let exit = ray_intersect(self.surface, &from, &self.closing, res * lit(0.5), res)
                .into_iter()
                .filter(|h| h.normal.dot(&self.closing) > lit(0.5))
                .last();
            let Some(hit) = exit else {
                return Probe::Miss;
            };
            if hit.distance > self.options.max_aperture {
                return Probe::Wide(hit.distance);
            }
            Probe::Hit {
                contact: hit.position,
                opening: hit.distance,
                shortlist: near_shortlist(self.dmg, &hit.position, &self.closing),
            }
        })
    }

    /// Secondary placement for the principal at `node` with finger `angle`.
    pub fn secondary(&self, node: NodeId, angle: u32) -> Result<Secondary<T>, Rejection> {
        let (contact, opening, list) = match self.probe(node) {
            Probe::Miss => return Err(Rejection::RayMiss),
            Probe::Wide(_) => return Err(Rejection::ApertureExceeded),
            Probe::Hit {
                contact,
                opening,
                shortlist,
            } => (*contact, *opening, shortlist),
        };
        let dir = finger_direction(&self.dmg.node(node).normal, angle);
        let step = self.dmg.finger().angle_step;
        let found = list.iter().find_map(|&id| {
            let a = discretize(angle_of(&self.dmg.node(id).normal, &dir), step);
            self.dmg.node(id).angles.contains(a).then_some((id, a))
        });
        let Some((id, a)) = found else {
            return Err(Rejection::NoSecondaryNode);
        };
        if let Some(c) = self.secondary_component {
            if self.dmg.component(id) != c {
                return Err(Rejection::OutsideSecondaryComponent);
            }
        }
        Ok(Secondary {
            node: Some(id),
            contact,
            angle: a,
            opening,
        })
    }

    fn admit(&self, node: NodeId, angle: u32) -> Option<T> {
        if self.options.ignore_secondary {
            return Some(T::zero());
        }
        match self.secondary(node, angle) {
            Ok(s) => Some(s.opening),
            Err(Rejection::ApertureExceeded) => {
                self.rejected_aperture.set(self.rejected_aperture.get() + 1);
                None
            }
            Err(_) => {
                self.rejected_secondary.set(self.rejected_secondary.get() + 1);
                None
            }
        }
    }

    /// Whether sliding from `from` to `to` needs the object to be pulled.
    pub fn needs_pull(&self, from: NodeId, to: NodeId) -> bool {
        if let Some(&p) = self.pulls.borrow().get(&(from, to)) {
            return p;
        }
        let a = self.dmg.node(from).contact;
        let t = self.dmg.node(to).contact - a;
        let pull = push_face(self.surface, &a, &t, self.dmg.resolution()).is_none();
        self.pulls.borrow_mut().insert((from, to), pull);
        pull
    }

    pub fn rotation_cost(&self, degrees: i32) -> T {
        let w = &self.options.weights;
        let r: T = lit(degrees.unsigned_abs() as f64);
        w.rotation * r + w.excess_rotation * (r - w.comfort_arc).max(T::zero())
    }

    /// Outgoing moves from `s` with their costs. `s` itself is assumed valid.
    pub fn transitions(&self, s: State) -> Vec<(State, T, Move)> {
        let mut out = Vec::new();
        let node = self.dmg.node(s.node);
        let here = if self.options.ignore_secondary {
            T::zero()
        } else {
            match self.admit(s.node, s.angle) {
                Some(o) => o,
                None => return out,
            }
        };
        if !s.rotated {
            for a in node.angles.angles() {
                if a == s.angle {
                    continue;
                }
                if self.admit(s.node, a).is_none() {
                    continue;
                }
                let r = node.angles.rotation(s.angle, a).expect("both inside");
                out.push((
                    State {
                        node: s.node,
                        angle: a,
                        rotated: true,
                    },
                    self.rotation_cost(r),
                    Move::Rotate(r),
                ));
            }
        }
        let w = &self.options.weights;
        for &m in self.dmg.neighbours(s.node) {
            let next = self.dmg.node(m);
            if !next.angles.contains(s.angle) {
                continue;
            }
            let Some(there) = self.admit(m, s.angle) else {
                continue;
            };
            let mut cost = (next.contact - node.contact).norm() + w.opening * (there - here).abs();
            if w.pull > T::zero() && self.needs_pull(s.node, m) {
                cost += w.pull;
            }
            out.push((
                State {
                    node: m,
                    angle: s.angle,
                    rotated: false,
                },
                cost,
                Move::Translate,
            ));
        }
        out
    }

    fn take_counters(&self) -> (usize, usize) {
        (self.rejected_secondary.take(), self.rejected_aperture.take())
    }
}

/// Nodes within `resolution` of the nearest one to `p`, nearest first, ties
/// by id. With `facing`, only nodes whose normal points along it are
/// considered.
pub(crate) fn shortlist<T: Real>(dmg: &Dmg<T>, p: &Point3<T>, facing: Option<&Vector3<T>>) -> Vec<NodeId> {
    let half: T = lit(0.5);
    let mut cand: Vec<(T, NodeId)> = dmg
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| facing.is_none_or(|f| n.normal.dot(f) > half))
        .map(|(i, n)| ((n.contact - p).norm(), i))
        .collect();
    let Some(dmin) = cand.iter().map(|c| c.0).reduce(|a, b| a.min(b)) else {
        return Vec::new();
    };
    let limit = dmin + dmg.resolution();
    cand.retain(|c| c.0 <= limit);
    cand.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    cand.into_iter().map(|c| c.1).collect()
}

/// Shortlist for the secondary finger: empty when no node facing along
/// `closing` lies within 1.5 resolutions of `p`.
fn near_shortlist<T: Real>(dmg: &Dmg<T>, p: &Point3<T>, closing: &Vector3<T>) -> Vec<NodeId> {
    let list = shortlist(dmg, p, Some(closing));
    match list.first() {
        Some(&id) if (dmg.node(id).contact - p).norm() <= dmg.resolution() * lit(1.5) => list,
        _ => Vec::new(),
    }
}

/// Result of a search: visited states with the move that reached each, and
/// the total cost.
#[derive(Debug, Clone)]
pub struct SearchResult<T: Real> {
    pub states: Vec<State>,
    pub moves: Vec<Move>,
    pub cost: T,
}

/// Dijkstra from `start` to any state at `goal_node` with `goal_angle`.
pub fn dijkstra<T: Real>(
    space: &SearchSpace<'_, T>,
    start: State,
    goal_node: NodeId,
    goal_angle: u32,
    diag: &mut PlanDiagnostics,
) -> Option<SearchResult<T>> {
    let n = space.state_count();
    let mut dist: Vec<Option<T>> = vec![None; n];
    let mut prev: Vec<Option<(usize, Move)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let s0 = space.index(start);
    dist[s0] = Some(T::zero());
    heap.push(Reverse((OrdScalar(T::zero()), s0)));
    let mut reached = None;
    while let Some(Reverse((OrdScalar(d), u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        diag.expanded += 1;
        let s = space.state(u);
        if s.node == goal_node && s.angle == goal_angle {
            reached = Some(u);
            break;
        }
        for (t, w, mv) in space.transitions(s) {
            let v = space.index(t);
            let nd = d + w;
            if dist[v].is_none_or(|old| nd < old) {
                dist[v] = Some(nd);
                prev[v] = Some((u, mv));
                heap.push(Reverse((OrdScalar(nd), v)));
            }
        }
    }
    let (sec, ap) = space.take_counters();
    diag.rejected_by_secondary += sec;
    diag.rejected_by_aperture += ap;
    let goal = reached?;
    let cost = dist[goal].expect("reached");
    let mut states = vec![space.state(goal)];
    let mut moves = Vec::new();
    let mut at = goal;
    while let Some((p, mv)) = prev[at] {
        states.push(space.state(p));
        moves.push(mv);
        at = p;
    }
    states.reverse();
    moves.reverse();
    diag.total_cost = to_f64(cost);
    Some(SearchResult {
        states,
        moves,
        cost,
    })
}
