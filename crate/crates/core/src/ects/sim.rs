use std::io::{self, Write};

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::contact::{push_contact_in, GraspFrame, PushContact};
use super::{ects_map, rotation_velocity, translation_velocity, twist_step, EctsParams, Twist};
use crate::dmg::{angle_of, Dmg};
use crate::planner::{push_face, GraspState, Primitive, PrimitiveSequence};
use crate::scalar::{lit, to_f64, Real};
use crate::surface::OrientedSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    FindContact,
    Approach,
    Execute,
    Leave,
}

/// Proportional gains, saturation limits and stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct ControllerGains<T: Real> {
    pub k_opening: T,
    pub k_linear: T,
    pub k_angular: T,
    /// Integration step, seconds.
    pub dt: T,
    pub tolerance_pos: T,
    /// Degrees.
    pub tolerance_ang: T,
    pub v_max: T,
    pub omega_max: T,
    /// Step budget of a single phase.
    pub max_steps: usize,
}

impl<T: Real> Default for ControllerGains<T> {
    fn default() -> Self {
        Self {
            k_opening: lit(0.7),
            k_linear: lit(0.32),
            k_angular: lit(16.0),
            dt: lit(0.01),
            tolerance_pos: lit(0.001),
            tolerance_ang: lit(0.5),
            v_max: lit(0.05),
            omega_max: lit(0.5),
            max_steps: 50_000,
        }
    }
}

impl<T: Real> ControllerGains<T> {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("k_opening", self.k_opening),
            ("k_linear", self.k_linear),
            ("k_angular", self.k_angular),
            ("dt", self.dt),
            ("tolerance_pos", self.tolerance_pos),
            ("tolerance_ang", self.tolerance_ang),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.v_max < T::zero() || self.omega_max < T::zero() {
            return Err("velocity limits must not be negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct ExecutionOptions<T: Real> {
    pub params: EctsParams<T>,
    pub gains: ControllerGains<T>,
    /// Absolute twist of the arm pair, held constant.
    pub absolute: Twist<T>,
    /// Inset of the rotation push line past the fingertip; five resolutions
    /// when unset.
    pub depth: Option<T>,
    /// How far the first gripper opens while the object moves.
    pub loosen: T,
    /// Distance the second gripper backs off after a push.
    pub retreat: T,
    /// Rotations wider than this many degrees are flagged.
    pub comfort_arc: T,
}

impl<T: Real> Default for ExecutionOptions<T> {
    fn default() -> Self {
        Self {
            params: EctsParams::default(),
            gains: ControllerGains::default(),
            absolute: Twist::zero(),
            depth: None,
            loosen: lit(0.002),
            retreat: lit(0.02),
            comfort_arc: lit(120.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum ExecError {
    #[error("invalid execution options: {0}")]
    InvalidOptions(String),
    #[error("no push point for primitive {step}")]
    NoPushPoint { step: usize },
    #[error("primitive {step} did not converge during {phase:?}")]
    ExecutionStall { step: usize, phase: Phase },
    #[error("principal contact left the surface during primitive {step}")]
    ContactLost { step: usize },
}

/// One integration step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub time: f64,
    pub step: usize,
    pub phase: Phase,
    /// Object pose in the first gripper frame: quaternion `(w, x, y, z)` and
    /// translation.
    pub object_rotation: [f64; 4],
    pub object_translation: [f64; 3],
    /// Second gripper pose in the base frame.
    pub gripper2_rotation: [f64; 4],
    pub gripper2_position: [f64; 3],
    pub x1: [f64; 6],
    pub x2: [f64; 6],
    pub opening: f64,
    /// Principal contact in object coordinates.
    pub contact: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    /// Metres, against the last planned contact.
    pub position_error: f64,
    pub angle_error_deg: f64,
    /// Total rotation of the object inside the gripper.
    pub orientation_change_deg: f64,
    pub steps: usize,
    /// Execute steps that made no progress.
    pub stalls: usize,
    pub primitives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub log: Vec<LogRecord>,
    pub report: ExecutionReport,
    pub warnings: Vec<String>,
}

impl Execution {
    /// The log as JSON lines.
    pub fn write_log(&self, w: &mut impl Write) -> io::Result<()> {
        for r in &self.log {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

struct Pose<T: Real> {
    rot: Matrix3<T>,
    pos: Vector3<T>,
}

struct Sim<'a, T: Real> {
    surface: &'a OrientedSurface<T>,
    opts: &'a ExecutionOptions<T>,
    resolution: T,
    /// Object to first-gripper transform.
    obj: Pose<T>,
    g1: Pose<T>,
    g2: Pose<T>,
    opening: T,
    time: T,
    stalls: usize,
    log: Vec<LogRecord>,
}

fn quat<T: Real>(r: &Matrix3<T>) -> [f64; 4] {
    let m = r.map(to_f64);
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    [q.w, q.i, q.j, q.k]
}

fn arr3<T: Real>(v: &Vector3<T>) -> [f64; 3] {
    [to_f64(v.x), to_f64(v.y), to_f64(v.z)]
}

fn arr6<T: Real>(t: &Twist<T>) -> [f64; 6] {
    t.to_array().map(to_f64)
}

/// Shortest signed difference `to - from` in degrees.
fn angle_diff(to: f64, from: f64) -> f64 {
    (to - from + 180.0).rem_euclid(360.0) - 180.0
}

impl<'a, T: Real> Sim<'a, T> {
    fn contact(&self) -> Point3<T> {
        Point3::from(self.obj.rot.transpose() * -self.obj.pos)
    }

    fn to_gripper(&self, x: &Point3<T>) -> Vector3<T> {
        self.obj.rot * x.coords + self.obj.pos
    }

    fn frame(&self) -> GraspFrame<T> {
        let rt = self.obj.rot.transpose();
        GraspFrame {
            contact: self.contact(),
            closing: rt * -Vector3::y(),
            finger: rt * Vector3::z(),
            opening: self.opening,
        }
    }

    fn finger_angle(&self, normal: &Vector3<T>) -> f64 {
        angle_of(normal, &(self.obj.rot.transpose() * Vector3::z()))
    }

    /// Second gripper position in the first gripper frame.
    fn gripper2(&self) -> Vector3<T> {
        self.g1.rot.transpose() * (self.g2.pos - self.g1.pos)
    }

    fn measured_opening(&self) -> Option<T> {
        let f = self.frame();
        push_face(self.surface, &f.contact, &f.closing, self.resolution).map(|h| h.distance)
    }

    /// Advances one step. `relative` is expressed in the first gripper frame;
    /// when `pivot` is set the object follows the second gripper held at
    /// that point.
    fn step(&mut self, k: usize, phase: Phase, relative: Twist<T>, pivot: Option<Vector3<T>>, opening: T) {
        let dt = self.opts.gains.dt;
        let rel_base = relative.rotated(&self.g1.rot);
        let (x1, x2) = ects_map(&self.opts.params, &self.opts.absolute, &rel_base);
        let actual = (x2 - x1).rotated(&self.g1.rot.transpose());
        for (pose, x) in [(&mut self.g1, &x1), (&mut self.g2, &x2)] {
            pose.pos += x.linear * dt;
            pose.rot = Rotation3::new(x.angular * dt).into_inner() * pose.rot;
        }
        if let Some(q) = pivot {
            let at_origin = Twist::new(actual.linear - actual.angular.cross(&q), actual.angular);
            let (dr, dp) = twist_step(&at_origin, dt);
            self.obj.rot = dr * self.obj.rot;
            self.obj.pos = dr * self.obj.pos + dp;
        }
        self.opening += self.opts.gains.k_opening * (opening - self.opening) * dt;
        self.time += dt;
        self.record(k, phase, &x1, &x2);
    }

    fn record(&mut self, k: usize, phase: Phase, x1: &Twist<T>, x2: &Twist<T>) {
        let c = self.contact();
        self.log.push(LogRecord {
            time: to_f64(self.time),
            step: k,
            phase,
            object_rotation: quat(&self.obj.rot),
            object_translation: arr3(&self.obj.pos),
            gripper2_rotation: quat(&self.g2.rot),
            gripper2_position: arr3(&self.g2.pos),
            x1: arr6(x1),
            x2: arr6(x2),
            opening: to_f64(self.opening),
            contact: arr3(&c.coords),
        });
    }

    /// Moves the second gripper to `target` (first gripper frame) with the
    /// object left in place.
    fn move_gripper2(&mut self, k: usize, phase: Phase, target: Vector3<T>, opening: T) -> Result<(), ExecError> {
        let g = self.opts.gains;
        for _ in 0..g.max_steps {
            let e = target - self.gripper2();
            let dist = e.norm();
            if dist <= g.tolerance_pos {
                return Ok(());
            }
            let m = (g.k_linear * dist).min(g.v_max);
            self.step(k, phase, Twist::new(e / dist * m, Vector3::zeros()), None, opening);
        }
        Err(ExecError::ExecutionStall { step: k, phase })
    }

    fn check_contact(&self, k: usize) -> Result<(), ExecError> {
        let (_, d) = self.surface.nearest(&self.contact());
        if d > self.resolution * lit(2.0) {
            return Err(ExecError::ContactLost { step: k });
        }
        Ok(())
    }

    fn translate(&mut self, k: usize, target: &Point3<T>, push: &PushContact<T>, opening: T) -> Result<(), ExecError> {
        let g = self.opts.gains;
        let mut last = T::max_value().unwrap();
        for _ in 0..g.max_steps {
            let e = self.obj.rot * (target - self.contact());
            let planar = Vector2::new(e.x, e.z);
            let dist = planar.norm();
            if dist <= g.tolerance_pos {
                return Ok(());
            }
            if dist >= last {
                self.stalls += 1;
            }
            last = dist;
            let m = (g.k_linear * dist).min(g.v_max);
            let rel = translation_velocity(&planar, &Matrix3::identity(), m);
            let q = self.to_gripper(&push.position);
            self.step(k, Phase::Execute, rel, Some(q), opening);
            self.check_contact(k)?;
        }
        Err(ExecError::ExecutionStall {
            step: k,
            phase: Phase::Execute,
        })
    }

    fn rotate(
        &mut self,
        k: usize,
        goal_angle: f64,
        normal: &Vector3<T>,
        push: &PushContact<T>,
        opening: T,
    ) -> Result<(), ExecError> {
        let g = self.opts.gains;
        let q0 = self.to_gripper(&push.position);
        let theta = q0.x.atan2(q0.z);
        let rho = (q0.x * q0.x + q0.z * q0.z).sqrt();
        let mut phi = T::zero();
        let mut last = f64::INFINITY;
        for _ in 0..g.max_steps {
            let remaining = angle_diff(goal_angle, self.finger_angle(normal));
            if remaining.abs() <= to_f64(g.tolerance_ang) {
                return Ok(());
            }
            if remaining.abs() >= last {
                self.stalls += 1;
            }
            last = remaining.abs();
            // the object turns against the finger
            let rate = (-g.k_angular * lit::<T>(remaining.to_radians())).max(-g.omega_max).min(g.omega_max);
            let mut rel = rotation_velocity(theta, phi, rate);
            rel.linear *= rho;
            let q = self.to_gripper(&push.position);
            self.step(k, Phase::Execute, rel, Some(q), opening);
            phi += rate * g.dt;
            self.check_contact(k)?;
        }
        Err(ExecError::ExecutionStall {
            step: k,
            phase: Phase::Execute,
        })
    }
}

/// Kinematic execution of `sequence` from `start`, one find-approach-push-
/// leave cycle per primitive, with ideal sticking contact at the pusher.
pub fn simulate_execution<T: Real>(
    surface: &OrientedSurface<T>,
    dmg: &Dmg<T>,
    sequence: &PrimitiveSequence<T>,
    start: &GraspState<T>,
    opts: &ExecutionOptions<T>,
) -> Result<Execution, ExecError> {
    opts.params.validate().map_err(ExecError::InvalidOptions)?;
    opts.gains.validate().map_err(ExecError::InvalidOptions)?;
    if !opts.absolute.is_finite() {
        return Err(ExecError::InvalidOptions("absolute twist must be finite".into()));
    }
    let resolution = dmg.resolution();
    let depth = opts.depth.unwrap_or(resolution * lit(5.0));
    let f = GraspFrame::from_grasp(start);
    let (y, z) = (f.axis(), f.finger);
    let rot = Matrix3::from_rows(&[y.cross(&z).transpose(), y.transpose(), z.transpose()]);
    let mut sim = Sim {
        surface,
        opts,
        resolution,
        obj: Pose {
            rot,
            pos: rot * -f.contact.coords,
        },
        g1: Pose {
            rot: Matrix3::identity(),
            pos: Vector3::zeros(),
        },
        g2: Pose {
            rot: Matrix3::identity(),
            pos: Vector3::new(T::zero(), lit(0.2), T::zero()),
        },
        opening: start.opening,
        time: T::zero(),
        stalls: 0,
        log: Vec::new(),
    };
    let start_rot = rot;
    let mut warnings = Vec::new();
    let mut executed = 0;
    for (k, step) in sequence.steps.iter().enumerate() {
        let noop = match &step.primitive {
            Primitive::Rotation(r) => *r == 0,
            Primitive::Translation(t) => t.norm() <= T::zero(),
        };
        if noop {
            continue;
        }
        if let Primitive::Rotation(r) = step.primitive {
            if lit::<T>(r.unsigned_abs() as f64) > opts.comfort_arc {
                warnings.push(format!("primitive {k} rotates {r} degrees, past the comfort arc"));
            }
        }
        executed += 1;
        let frame = sim.frame();
        let push = push_contact_in(surface, &frame, &step.primitive, depth, resolution)
            .map_err(|_| ExecError::NoPushPoint { step: k })?;
        let zero = Twist::zero();
        let nominal = sim.opening;
        sim.record(k, Phase::FindContact, &zero, &zero);
        let loose = nominal + opts.loosen;
        let target = sim.to_gripper(&push.position);
        sim.move_gripper2(k, Phase::Approach, target, loose)?;
        match &step.primitive {
            Primitive::Translation(_) => sim.translate(k, &step.after.contact, &push, loose)?,
            Primitive::Rotation(_) => {
                let normal = dmg.node(step.after.node).normal;
                sim.rotate(k, step.after.angle as f64, &normal, &push, loose)?
            }
        }
        let tight = sim.measured_opening().unwrap_or(nominal);
        let away = sim.to_gripper(&push.position) + sim.obj.rot * push.normal * opts.retreat;
        sim.move_gripper2(k, Phase::Leave, away, tight)?;
    }
    let (end_contact, end_angle) = sequence.end();
    let end_normal = match sequence.steps.last() {
        Some(s) => dmg.node(s.after.node).normal,
        None => start.principal_normal,
    };
    let position_error = to_f64((sim.contact() - end_contact).norm());
    let angle_error_deg = angle_diff(end_angle as f64, sim.finger_angle(&end_normal)).abs();
    let turn = Rotation3::from_matrix_unchecked((sim.obj.rot * start_rot.transpose()).map(to_f64));
    Ok(Execution {
        report: ExecutionReport {
            position_error,
            angle_error_deg,
            orientation_change_deg: turn.angle().to_degrees(),
            steps: sim.log.len(),
            stalls: sim.stalls,
            primitives: executed,
        },
        log: sim.log,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmg::build_dmg;
    use crate::planner::{GraspQuery, Planner, PlannerOptions, Snapshot, Step};
    use crate::shapes;
    use crate::surface::{segment, SegmentOptions};

    fn setup(s: &OrientedSurface<f64>) -> Dmg<f64> {
        let g = segment(s, 0.013, &SegmentOptions::default()).unwrap();
        build_dmg(&g, s, &Default::default(), 0.07).unwrap()
    }

    fn bar() -> (OrientedSurface<f64>, Dmg<f64>) {
        let s = shapes::box_surface::<f64>(0.3, 0.03, 0.02, 0.002);
        let d = setup(&s);
        (s, d)
    }

    /// Start on the top face of the bar near x0 with the finger across it,
    /// plus a single translation of `dx` along the bar.
    fn bar_task(s: &OrientedSurface<f64>, d: &Dmg<f64>, x0: f64, dx: f64) -> (GraspState<f64>, PrimitiveSequence<f64>) {
        let p = Planner::new(d, s, PlannerOptions::default());
        let start = p.grasp(&GraspQuery::new(Point3::new(x0, 0.0, 0.01), 90.0)).unwrap();
        let target = start.principal_contact + Vector3::new(dx, 0.0, 0.0);
        let seq = PrimitiveSequence {
            start: Snapshot {
                node: start.principal_node,
                angle: start.principal_angle,
                contact: start.principal_contact,
            },
            steps: vec![Step {
                primitive: Primitive::Translation(Vector3::new(dx, 0.0, 0.0)),
                after: Snapshot {
                    node: start.principal_node,
                    angle: start.principal_angle,
                    contact: target,
                },
            }],
        };
        (start, seq)
    }

    #[test]
    fn empty_sequence_is_a_no_op() {
        let (s, d) = bar();
        let (start, mut seq) = bar_task(&s, &d, -0.1, 0.02);
        seq.steps.clear();
        let ex = simulate_execution(&s, &d, &seq, &start, &ExecutionOptions::default()).unwrap();
        assert!(ex.log.is_empty());
        assert!(ex.report.position_error < 1e-12);
        assert!(ex.report.angle_error_deg < 1e-9);
    }

    #[test]
    fn bar_translation_converges() {
        let (s, d) = bar();
        let (start, seq) = bar_task(&s, &d, -0.1, 0.02);
        let ex = simulate_execution(&s, &d, &seq, &start, &ExecutionOptions::default()).unwrap();
        assert!(ex.report.position_error <= 0.001, "{:?}", ex.report);
        assert!(ex.report.orientation_change_deg <= 0.1);
        assert!(ex.report.angle_error_deg <= 0.1);
        let phases: Vec<Phase> = ex.log.iter().map(|r| r.phase).collect();
        assert_eq!(phases[0], Phase::FindContact);
        assert!(phases.contains(&Phase::Approach) && phases.contains(&Phase::Execute));
        assert_eq!(*phases.last().unwrap(), Phase::Leave);
        // the translation carries no angular command
        for r in ex.log.iter().filter(|r| r.phase == Phase::Execute) {
            assert_eq!(&r.x2[3..], &[0.0, 0.0, 0.0]);
        }
        let mut buf = Vec::new();
        ex.write_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), ex.log.len());
        let first: LogRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first, ex.log[0]);
    }

    #[test]
    fn coordination_decides_which_arm_moves() {
        let (s, d) = bar();
        let (start, seq) = bar_task(&s, &d, -0.1, 0.02);
        for (alpha, first_moves) in [(0.0, true), (1.0, false)] {
            let opts = ExecutionOptions {
                params: EctsParams { alpha, beta: 1.0 },
                ..Default::default()
            };
            let ex = simulate_execution(&s, &d, &seq, &start, &opts).unwrap();
            for r in &ex.log {
                let x1 = r.x1.iter().any(|c| *c != 0.0);
                let x2 = r.x2.iter().any(|c| *c != 0.0);
                if x1 || x2 {
                    assert_eq!(x1, first_moves);
                    assert_eq!(x2, !first_moves);
                }
            }
            assert!(ex.report.position_error <= 0.001);
        }
    }

    #[test]
    fn rotation_reaches_the_goal_angle() {
        let s = shapes::box_surface::<f64>(0.1, 0.1, 0.02, 0.002);
        let d = setup(&s);
        let p = Planner::new(&d, &s, PlannerOptions::default());
        let start = p.grasp(&GraspQuery::new(Point3::new(0.0, 0.0, 0.01), 90.0)).unwrap();
        let snap = Snapshot {
            node: start.principal_node,
            angle: start.principal_angle,
            contact: start.principal_contact,
        };
        for r in [90, -60] {
            let seq = PrimitiveSequence {
                start: snap,
                steps: vec![Step {
                    primitive: Primitive::Rotation(r),
                    after: Snapshot {
                        angle: (start.principal_angle as i32 + r).rem_euclid(360) as u32,
                        ..snap
                    },
                }],
            };
            let ex = simulate_execution(&s, &d, &seq, &start, &ExecutionOptions::default()).unwrap();
            assert!(ex.report.angle_error_deg <= 0.5, "{r}: {:?}", ex.report);
            assert!(ex.report.position_error <= 1e-9);
            assert!((ex.report.orientation_change_deg - (r as f64).abs()).abs() <= 0.5);
        }
    }

    #[test]
    fn stalled_and_invalid_runs() {
        let (s, d) = bar();
        let (start, seq) = bar_task(&s, &d, -0.1, 0.02);
        let mut opts = ExecutionOptions::default();
        opts.gains.v_max = 0.0;
        opts.gains.max_steps = 200;
        assert!(matches!(
            simulate_execution(&s, &d, &seq, &start, &opts),
            Err(ExecError::ExecutionStall { step: 0, .. })
        ));
        let mut opts = ExecutionOptions::default();
        opts.params.beta = 0.5;
        assert!(matches!(
            simulate_execution(&s, &d, &seq, &start, &opts),
            Err(ExecError::InvalidOptions(_))
        ));
        // pulling off the near end has nothing to push against
        let mut pull = seq.clone();
        pull.steps[0].primitive = Primitive::Translation(Vector3::new(0.0, 0.0, 0.01));
        assert!(matches!(
            simulate_execution(&s, &d, &pull, &start, &ExecutionOptions::default()),
            Err(ExecError::NoPushPoint { step: 0 })
        ));
    }

    #[test]
    fn sliding_off_the_edge_loses_contact() {
        let (s, d) = bar();
        // aim past the end of the bar
        let (start, seq) = bar_task(&s, &d, 0.12, 0.08);
        let r = simulate_execution(&s, &d, &seq, &start, &ExecutionOptions::default());
        assert!(matches!(r, Err(ExecError::ContactLost { step: 0 })), "{r:?}");
    }
}
