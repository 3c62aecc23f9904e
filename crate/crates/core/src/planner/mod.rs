//! In-hand regrasp planning over a [`Dmg`].

mod primitives;
mod search;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use primitives::{
    merge_segments, to_primitives, Primitive, PrimitiveSequence, RotationPolicy, Snapshot, Step,
};
pub use search::{dijkstra, Move, Rejection, SearchOptions, SearchResult, SearchSpace, Secondary, State};

use crate::dmg::{discretize, Dmg, NodeId};
use crate::scalar::{lit, to_f64, Real};
use crate::surface::{ray_intersect, OrientedSurface, RayHit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no node near the query admits angle {angle} degrees")]
    NoAdmissibleNode { angle: u32 },
    #[error("invalid start: {0}")]
    InvalidStart(String),
    #[error("invalid goal: {0}")]
    InvalidGoal(String),
    #[error("no path from component {start_component} to component {goal_component}: {reason}")]
    NoPath {
        start_component: usize,
        goal_component: usize,
        reason: String,
    },
    #[error("consecutive path nodes share no angle at step {step}")]
    EmptyIntersection { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct CostWeights<T: Real> {
    /// Cost per degree of rotation.
    pub rotation: T,
    /// Cost per metre of opening change.
    pub opening: T,
    /// Added to any translation that would need a pull.
    pub pull: T,
    /// Cost per degree beyond `comfort_arc` in a single rotation.
    pub excess_rotation: T,
    pub comfort_arc: T,
}

impl<T: Real> Default for CostWeights<T> {
    fn default() -> Self {
        Self {
            rotation: lit(0.0005),
            opening: lit(1.0),
            pull: lit(10.0),
            excess_rotation: lit(0.001),
            comfort_arc: lit(120.0),
        }
    }
}

impl<T: Real> CostWeights<T> {
    pub fn uniform() -> Self {
        Self {
            rotation: T::zero(),
            opening: T::zero(),
            pull: T::zero(),
            excess_rotation: T::zero(),
            comfort_arc: lit(120.0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.rotation, self.opening, self.pull, self.excess_rotation, self.comfort_arc];
        if all.iter().any(|w| !(*w >= T::zero())) {
            return Err("cost weights must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub expanded: usize,
    pub rejected_by_secondary: usize,
    pub rejected_by_aperture: usize,
    pub total_cost: f64,
}

/// A requested gripper configuration: where the principal finger touches,
/// its angle, and optionally the closing direction (defaults to the inward
/// surface normal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GraspQuery<T: Real> {
    pub contact: Point3<T>,
    pub angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closing_dir: Option<Vector3<T>>,
}

impl<T: Real> GraspQuery<T> {
    pub fn new(contact: Point3<T>, angle: f64) -> Self {
        Self {
            contact,
            angle,
            closing_dir: None,
        }
    }
}

/// Full gripper configuration on the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GraspState<T: Real> {
    pub principal_node: NodeId,
    pub principal_angle: u32,
    pub principal_contact: Point3<T>,
    pub principal_normal: Vector3<T>,
    pub secondary_node: Option<NodeId>,
    pub secondary_contact: Point3<T>,
    pub secondary_angle: u32,
    pub opening: T,
    pub closing_dir: Vector3<T>,
}

impl<T: Real> GraspState<T> {
    pub fn state(&self) -> State {
        State {
            node: self.principal_node,
            angle: self.principal_angle,
            rotated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PlannerOptions<T: Real> {
    pub weights: CostWeights<T>,
    pub max_aperture: T,
    pub rotation_policy: RotationPolicy,
    /// Tolerances for joining translations, degrees.
    pub merge_angle_tol: u32,
    pub merge_direction_tol: f64,
}

impl<T: Real> Default for PlannerOptions<T> {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            max_aperture: lit(0.15),
            rotation_policy: RotationPolicy::Minimal,
            merge_angle_tol: 0,
            merge_direction_tol: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Plan<T: Real> {
    pub start: GraspState<T>,
    pub goal: GraspState<T>,
    pub nodes: Vec<NodeId>,
    /// Principal configuration after every searched move, starting with the
    /// start state.
    pub states: Vec<State>,
    pub primitives: PrimitiveSequence<T>,
    pub diagnostics: PlanDiagnostics,
    pub warnings: Vec<String>,
}

/// Face for the second arm to push when the contact should slide along `t`:
/// the exit point of the ray from `from` along `t`. `None` means the motion
/// would need a pull.
pub fn push_face<T: Real>(
    surface: &OrientedSurface<T>,
    from: &Point3<T>,
    t: &Vector3<T>,
    resolution: T,
) -> Option<RayHit<T>> {
    let len = t.norm();
    if !(len > T::zero()) {
        return None;
    }
    let dir = t / len;
    ray_intersect(surface, from, &dir, resolution * lit(0.5), resolution)
        .into_iter()
        .filter(|h| h.normal.dot(&dir) > lit(0.5))
        .last()
}

/// Node nearest to `contact` whose run holds `angle`, among nodes no farther
/// than the nearest one plus one resolution.
pub fn snap_to_node<T: Real>(dmg: &Dmg<T>, contact: &Point3<T>, angle: f64) -> Result<NodeId, PlanError> {
    snap_oriented(dmg, contact, angle, None)
}

/// As [`snap_to_node`], restricted to nodes whose normal is within 60° of
/// `normal`.
pub fn snap_oriented<T: Real>(
    dmg: &Dmg<T>,
    contact: &Point3<T>,
    angle: f64,
    normal: Option<&Vector3<T>>,
) -> Result<NodeId, PlanError> {
    let a = discretize(angle, dmg.finger().angle_step);
    search::shortlist(dmg, contact, normal)
        .into_iter()
        .find(|&id| dmg.node(id).angles.contains(a))
        .ok_or(PlanError::NoAdmissibleNode { angle: a })
}

pub struct Planner<'a, T: Real> {
    dmg: &'a Dmg<T>,
    surface: &'a OrientedSurface<T>,
    options: PlannerOptions<T>,
}

impl<'a, T: Real> Planner<'a, T> {
    pub fn new(dmg: &'a Dmg<T>, surface: &'a OrientedSurface<T>, options: PlannerOptions<T>) -> Self {
        Self { dmg, surface, options }
    }

    pub fn dmg(&self) -> &Dmg<T> {
        self.dmg
    }

    pub fn options(&self) -> &PlannerOptions<T> {
        &self.options
    }

    fn search_options(&self, ignore_secondary: bool) -> SearchOptions<T> {
        SearchOptions {
            weights: self.options.weights,
            max_aperture: self.options.max_aperture,
            ignore_secondary,
        }
    }

    /// Snaps a query onto the graph and resolves its secondary finger.
    pub fn grasp(&self, q: &GraspQuery<T>) -> Result<GraspState<T>, Rejected> {
        let (idx, _) = self.surface.nearest(&q.contact);
        let surface_normal = self.surface.normals()[idx];
        let node = snap_oriented(self.dmg, &q.contact, q.angle, Some(&surface_normal)).map_err(Rejected::Snap)?;
        let n = self.dmg.node(node);
        let closing = q.closing_dir.map(|c| c.normalize()).unwrap_or(-n.normal);
        let angle = discretize(q.angle, self.dmg.finger().angle_step);
        let space = SearchSpace::new(self.dmg, self.surface, closing, self.search_options(false));
        let sec = space.secondary(node, angle).map_err(Rejected::Secondary)?;
        Ok(GraspState {
            principal_node: node,
            principal_angle: angle,
            principal_contact: n.contact,
            principal_normal: n.normal,
            secondary_node: sec.node,
            secondary_contact: sec.contact,
            secondary_angle: sec.angle,
            opening: sec.opening,
            closing_dir: closing,
        })
    }

    /// State space rooted at `start` with the secondary finger held in its
    /// starting component.
    pub fn space(&self, start: &GraspState<T>, ignore_secondary: bool) -> SearchSpace<'a, T> {
        let space = SearchSpace::new(self.dmg, self.surface, start.closing_dir, self.search_options(ignore_secondary));
        match start.secondary_node {
            Some(s) if !ignore_secondary => space.with_secondary_component(self.dmg.component(s)),
            _ => space,
        }
    }

    pub fn plan(&self, start: &GraspQuery<T>, goal: &GraspQuery<T>) -> Result<Plan<T>, PlanError> {
        let s = self
            .grasp(start)
            .map_err(|e| PlanError::InvalidStart(e.to_string()))?;
        let goal_node = snap_oriented(self.dmg, &goal.contact, goal.angle, Some(&self.surface_normal(&goal.contact)))
            .map_err(|e| PlanError::InvalidGoal(e.to_string()))?;
        let goal_angle = discretize(goal.angle, self.dmg.finger().angle_step);
        self.plan_from(&s, goal_node, goal_angle, goal.closing_dir)
    }

    fn surface_normal(&self, p: &Point3<T>) -> Vector3<T> {
        self.surface.normals()[self.surface.nearest(p).0]
    }

    /// Searches from a resolved start state to `goal_node` at `goal_angle`.
    pub fn plan_from(
        &self,
        start: &GraspState<T>,
        goal_node: NodeId,
        goal_angle: u32,
        goal_closing: Option<Vector3<T>>,
    ) -> Result<Plan<T>, PlanError> {
        let (cs, cg) = (self.dmg.component(start.principal_node), self.dmg.component(goal_node));
        let no_path = |reason: &str| PlanError::NoPath {
            start_component: cs,
            goal_component: cg,
            reason: reason.to_string(),
        };
        if cs != cg {
            return Err(no_path("start and goal lie in different components"));
        }
        if !self.dmg.node(goal_node).angles.contains(goal_angle) {
            return Err(PlanError::InvalidGoal(format!("angle {goal_angle} is outside the goal node's run")));
        }
        let mut warnings = Vec::new();
        let space = self.space(start, false);
        let goal_secondary = match space.secondary(goal_node, goal_angle) {
            Ok(sec) => sec,
            Err(r) => return Err(no_path(&format!("the goal grasp has no valid secondary finger ({r:?})"))),
        };
        if let Some(c) = goal_closing {
            if c.normalize().dot(&start.closing_dir) < lit(0.996) {
                warnings.push("goal closing direction differs from the start one; the start direction is kept".into());
            }
        }
        let mut diagnostics = PlanDiagnostics::default();
        let found = dijkstra(&space, start.state(), goal_node, goal_angle, &mut diagnostics)
            .ok_or_else(|| no_path("every route is invalidated by the secondary finger or the aperture"))?;
        let mut nodes: Vec<NodeId> = Vec::new();
        for s in &found.states {
            if nodes.last() != Some(&s.node) {
                nodes.push(s.node);
            }
        }

        let searched = PrimitiveSequence::from_states(self.dmg, &found.states, &found.moves);
        let primitives = match to_primitives(&nodes, self.dmg, start.principal_angle, goal_angle, self.options.rotation_policy) {
            Ok(seq) if self.sequence_is_valid(&space, &seq) => seq,
            _ => {
                warnings.push(format!(
                    "{:?} rotations break the secondary finger on this path; using the searched angles",
                    self.options.rotation_policy
                ));
                searched
            }
        };
        let primitives = merge_segments(&primitives, self.options.merge_angle_tol, self.options.merge_direction_tol);
        let g = self.dmg.node(goal_node);
        let goal = GraspState {
            principal_node: goal_node,
            principal_angle: goal_angle,
            principal_contact: g.contact,
            principal_normal: g.normal,
            secondary_node: goal_secondary.node,
            secondary_contact: goal_secondary.contact,
            secondary_angle: goal_secondary.angle,
            opening: goal_secondary.opening,
            closing_dir: start.closing_dir,
        };
        log::debug!(
            "plan of {} nodes, cost {:.4}, {} states expanded",
            nodes.len(),
            to_f64(found.cost),
            diagnostics.expanded
        );
        Ok(Plan {
            start: *start,
            goal,
            nodes,
            states: found.states,
            primitives,
            diagnostics,
            warnings,
        })
    }

    fn sequence_is_valid(&self, space: &SearchSpace<'_, T>, seq: &PrimitiveSequence<T>) -> bool {
        // every configuration swept by a rotation, and every one reached by a
        // translation, needs a secondary finger
        let mut node = seq.start.node;
        let mut angle = seq.start.angle;
        for s in &seq.steps {
            match s.primitive {
                Primitive::Rotation(r) => {
                    let dir = r.signum();
                    let step = self.dmg.finger().angle_step as i32;
                    for k in 1..=(r.abs() / step) {
                        let a = crate::dmg::angles::wrap_deg(angle as i64 + (dir * k * step) as i64);
                        if space.secondary(node, a).is_err() {
                            return false;
                        }
                    }
                    angle = s.after.angle;
                }
                Primitive::Translation(_) => {
                    node = s.after.node;
                    if space.secondary(node, angle).is_err() {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Why a grasp query could not be resolved.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejected {
    #[error(transparent)]
    Snap(PlanError),
    #[error("secondary finger: {0:?}")]
    Secondary(Rejection),
}

/// Shortest node path between two resolved grasps.
pub fn plan_path<T: Real>(
    dmg: &Dmg<T>,
    surface: &OrientedSurface<T>,
    start: &GraspState<T>,
    goal: &GraspState<T>,
    weights: CostWeights<T>,
    max_aperture: T,
) -> Result<(Vec<NodeId>, PlanDiagnostics), PlanError> {
    let planner = Planner::new(
        dmg,
        surface,
        PlannerOptions {
            weights,
            max_aperture,
            ..PlannerOptions::default()
        },
    );
    let plan = planner.plan_from(start, goal.principal_node, goal.principal_angle, Some(goal.closing_dir))?;
    Ok((plan.nodes, plan.diagnostics))
}
