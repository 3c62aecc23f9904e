use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::search::{Move, State};
use super::PlanError;
use crate::dmg::angles::{shortest_delta, wrap_deg};
use crate::dmg::{AngularComponent, Dmg, NodeId};
use crate::scalar::{deg_to_rad, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "snake_case")]
pub enum Primitive<T: Real> {
    /// Finger rotation about the closing axis, degrees.
    Rotation(i32),
    /// Contact displacement in the object frame, metres.
    Translation(Vector3<T>),
}

/// Expected principal configuration after a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Snapshot<T: Real> {
    pub node: NodeId,
    pub angle: u32,
    pub contact: Point3<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Step<T: Real> {
    pub primitive: Primitive<T>,
    pub after: Snapshot<T>,
}

/// Alternating rotations and translations, starting and ending with a
/// rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PrimitiveSequence<T: Real> {
    pub start: Snapshot<T>,
    pub steps: Vec<Step<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationPolicy {
    /// Rotate only when the current angle leaves the next intersection, and
    /// then by as little as possible.
    #[default]
    Minimal,
    /// At every step pick the shared angle closest to the goal angle.
    GoalSeeking,
}

impl<T: Real> PrimitiveSequence<T> {
    pub fn rotations(&self) -> impl Iterator<Item = i32> + '_ {
        self.steps.iter().filter_map(|s| match s.primitive {
            Primitive::Rotation(r) => Some(r),
            _ => None,
        })
    }

    pub fn translations(&self) -> impl Iterator<Item = Vector3<T>> + '_ {
        self.steps.iter().filter_map(|s| match s.primitive {
            Primitive::Translation(t) => Some(t),
            _ => None,
        })
    }

    pub fn translation_count(&self) -> usize {
        self.translations().count()
    }

    pub fn net_rotation(&self) -> i32 {
        self.rotations().sum()
    }

    pub fn displacement(&self) -> Vector3<T> {
        self.translations().fold(Vector3::zeros(), |a, t| a + t)
    }

    /// Contact and angle after every step, obtained by folding the
    /// primitives over the start snapshot.
    pub fn replay(&self) -> Vec<(Point3<T>, u32)> {
        let mut p = self.start.contact;
        let mut a = self.start.angle;
        let mut out = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            match s.primitive {
                Primitive::Rotation(r) => a = wrap_deg(a as i64 + r as i64),
                Primitive::Translation(t) => p += t,
            }
            out.push((p, a));
        }
        out
    }

    pub fn end(&self) -> (Point3<T>, u32) {
        self.replay()
            .last()
            .copied()
            .unwrap_or((self.start.contact, self.start.angle))
    }

    /// Checks alternation, nonzero translations and that replaying the
    /// primitives reproduces every snapshot.
    pub fn check(&self, tolerance: T) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("sequence has no steps".into());
        }
        for (k, s) in self.steps.iter().enumerate() {
            let want_rotation = k % 2 == 0;
            match (&s.primitive, want_rotation) {
                (Primitive::Rotation(_), true) => {}
                (Primitive::Translation(t), false) => {
                    if !(t.norm() > T::zero()) {
                        return Err(format!("translation at step {k} is zero"));
                    }
                }
                _ => return Err(format!("step {k} breaks the rotation/translation alternation")),
            }
        }
        if self.steps.len().is_multiple_of(2) {
            return Err("sequence must end with a rotation".into());
        }
        for (k, ((p, a), s)) in self.replay().iter().zip(&self.steps).enumerate() {
            if (p - s.after.contact).norm() > tolerance || *a != s.after.angle {
                return Err(format!("replay diverges from the snapshot at step {k}"));
            }
        }
        Ok(())
    }

    /// Builds the sequence from a searched state path.
    pub fn from_states(dmg: &Dmg<T>, states: &[State], moves: &[Move]) -> Self {
        let first = states[0];
        let snap = |s: State| Snapshot {
            node: s.node,
            angle: s.angle,
            contact: dmg.node(s.node).contact,
        };
        let mut steps = Vec::new();
        let mut pending = 0;
        let mut angle = first.angle;
        let mut at = first.node;
        for (mv, s) in moves.iter().zip(&states[1..]) {
            match mv {
                Move::Rotate(r) => {
                    pending += r;
                    angle = s.angle;
                }
                Move::Translate => {
                    steps.push(Step {
                        primitive: Primitive::Rotation(pending),
                        after: Snapshot {
                            node: at,
                            angle,
                            contact: dmg.node(at).contact,
                        },
                    });
                    pending = 0;
                    steps.push(Step {
                        primitive: Primitive::Translation(dmg.node(s.node).contact - dmg.node(at).contact),
                        after: snap(*s),
                    });
                    at = s.node;
                }
            }
        }
        steps.push(Step {
            primitive: Primitive::Rotation(pending),
            after: Snapshot {
                node: at,
                angle,
                contact: dmg.node(at).contact,
            },
        });
        Self {
            start: snap(first),
            steps,
        }
    }
}

fn pick(
    run: &AngularComponent,
    from: u32,
    options: &[u32],
    policy: RotationPolicy,
    goal: u32,
) -> Option<(u32, i32)> {
    let mut best: Option<(u32, i32)> = None;
    let key = |a: u32, r: i32| match policy {
        RotationPolicy::Minimal => (r.unsigned_abs(), 0, r < 0),
        RotationPolicy::GoalSeeking => (shortest_delta(a, goal).unsigned_abs(), r.unsigned_abs(), r < 0),
    };
    for &a in options {
        let Some(r) = run.rotation(from, a) else {
            continue;
        };
        if best.is_none_or(|(ba, br)| key(a, r) < key(ba, br)) {
            best = Some((a, r));
        }
    }
    best
}

/// Converts a node path into primitives using only the nodes' angle runs.
pub fn to_primitives<T: Real>(
    path: &[NodeId],
    dmg: &Dmg<T>,
    start_angle: u32,
    goal_angle: u32,
    policy: RotationPolicy,
) -> Result<PrimitiveSequence<T>, PlanError> {
    let Some(&first) = path.first() else {
        return Err(PlanError::InvalidStart("empty path".into()));
    };
    let last = *path.last().expect("nonempty");
    if !dmg.node(first).angles.contains(start_angle) {
        return Err(PlanError::InvalidStart(format!(
            "angle {start_angle} is outside the start node's run"
        )));
    }
    if !dmg.node(last).angles.contains(goal_angle) {
        return Err(PlanError::InvalidGoal(format!(
            "angle {goal_angle} is outside the goal node's run"
        )));
    }
    let mut steps = Vec::new();
    let mut angle = wrap_deg(start_angle as i64);
    for (k, pair) in path.windows(2).enumerate() {
        let (a, b) = (dmg.node(pair[0]), dmg.node(pair[1]));
        let shared = a.angles.intersection(&b.angles);
        if shared.is_empty() {
            return Err(PlanError::EmptyIntersection { step: k });
        }
        let (next, r) = if policy == RotationPolicy::Minimal && shared.contains(&angle) {
            (angle, 0)
        } else {
            pick(&a.angles, angle, &shared, policy, goal_angle).ok_or(PlanError::EmptyIntersection { step: k })?
        };
        angle = next;
        steps.push(Step {
            primitive: Primitive::Rotation(r),
            after: Snapshot {
                node: pair[0],
                angle,
                contact: a.contact,
            },
        });
        steps.push(Step {
            primitive: Primitive::Translation(b.contact - a.contact),
            after: Snapshot {
                node: pair[1],
                angle,
                contact: b.contact,
            },
        });
    }
    let end = dmg.node(last);
    let r = end.angles.rotation(angle, goal_angle).expect("both inside the goal run");
    steps.push(Step {
        primitive: Primitive::Rotation(r),
        after: Snapshot {
            node: last,
            angle: goal_angle,
            contact: end.contact,
        },
    });
    Ok(PrimitiveSequence {
        start: Snapshot {
            node: first,
            angle: wrap_deg(start_angle as i64),
            contact: dmg.node(first).contact,
        },
        steps,
    })
}

/// Joins consecutive translations whose directions differ by at most
/// `direction_tol` degrees when the rotation between them is at most
/// `angle_tol` degrees. Absorbed rotations are carried into the next kept
/// rotation so the net rotation is unchanged.
pub fn merge_segments<T: Real>(
    seq: &PrimitiveSequence<T>,
    angle_tol: u32,
    direction_tol: f64,
) -> PrimitiveSequence<T> {
    let cos_tol: T = deg_to_rad::<T>(lit(direction_tol)).cos();
    let mut out: Vec<Step<T>> = Vec::new();
    let mut carry = 0i32;
    let mut iter = seq.steps.iter().peekable();
    while let Some(step) = iter.next() {
        match step.primitive {
            Primitive::Rotation(r) => {
                let total = r + carry;
                let next_t = iter.peek().and_then(|s| match s.primitive {
                    Primitive::Translation(t) => Some(t),
                    _ => None,
                });
                let prev_t = match out.last() {
                    Some(Step {
                        primitive: Primitive::Translation(t),
                        ..
                    }) => Some(*t),
                    _ => None,
                };
                if let (Some(prev), Some(next)) = (prev_t, next_t) {
                    let aligned = prev.normalize().dot(&next.normalize()) >= cos_tol;
                    if total.unsigned_abs() <= angle_tol && aligned {
                        carry = total;
                        let following = iter.next().expect("peeked");
                        let last = out.last_mut().expect("checked");
                        last.primitive = Primitive::Translation(prev + next);
                        last.after = following.after;
                        continue;
                    }
                }
                carry = 0;
                out.push(Step {
                    primitive: Primitive::Rotation(total),
                    after: step.after,
                });
            }
            Primitive::Translation(_) => out.push(step.clone()),
        }
    }
    let mut merged = PrimitiveSequence {
        start: seq.start,
        steps: out,
    };
    // absorbed rotations shift later angles, so refresh the snapshots
    let replay = merged.replay();
    for (s, (p, a)) in merged.steps.iter_mut().zip(replay) {
        s.after.contact = p;
        s.after.angle = a;
    }
    merged
}
