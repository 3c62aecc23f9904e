//! Discretized finger angles and their circular runs.

use serde::{Deserialize, Serialize};

/// Normalizes an angle in degrees to `[0, 360)`.
pub fn wrap_deg(a: i64) -> u32 {
    a.rem_euclid(360) as u32
}

/// Signed difference `to - from` folded into `(-180, 180]`.
pub fn shortest_delta(from: u32, to: u32) -> i32 {
    let d = (to as i32 - from as i32).rem_euclid(360);
    if d > 180 {
        d - 360
    } else {
        d
    }
}

/// Snaps an arbitrary angle to the nearest multiple of `step`, wrapped to
/// `[0, 360)`.
pub fn discretize(angle_deg: f64, step: u32) -> u32 {
    let s = step as f64;
    wrap_deg(((angle_deg / s).round() * s) as i64)
}

/// A maximal circularly contiguous run of admissible angles:
/// `start, start + step, ..., start + (count - 1) * step` modulo 360.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AngularComponent {
    pub start: u32,
    pub count: u32,
    pub step: u32,
}

impl AngularComponent {
    pub fn full(step: u32) -> Self {
        Self {
            start: 0,
            count: 360 / step,
            step,
        }
    }

    pub fn is_full(&self) -> bool {
        self.count * self.step == 360
    }

    /// Last angle of the run.
    pub fn end(&self) -> u32 {
        wrap_deg(self.start as i64 + ((self.count - 1) * self.step) as i64)
    }

    /// Position of `angle` along the run, if it belongs to it.
    pub fn offset(&self, angle: u32) -> Option<u32> {
        let d = (angle as i64 - self.start as i64).rem_euclid(360) as u32;
        (d.is_multiple_of(self.step) && d / self.step < self.count).then_some(d / self.step)
    }

    pub fn contains(&self, angle: u32) -> bool {
        self.offset(wrap_deg(angle as i64)).is_some()
    }

    pub fn angles(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.count).map(move |k| wrap_deg(self.start as i64 + (k * self.step) as i64))
    }

    pub fn intersects(&self, other: &AngularComponent) -> bool {
        self.angles().any(|a| other.contains(a))
    }

    /// Angles shared with `other`, in this run's order.
    pub fn intersection(&self, other: &AngularComponent) -> Vec<u32> {
        self.angles().filter(|&a| other.contains(a)).collect()
    }

    /// Signed rotation in degrees from `from` to `to` that stays inside the
    /// run. On a full circle the shorter way round is used. `None` when
    /// either angle is outside.
    pub fn rotation(&self, from: u32, to: u32) -> Option<i32> {
        let (a, b) = (self.offset(from)?, self.offset(to)?);
        if self.is_full() {
            return Some(shortest_delta(from, to));
        }
        Some((b as i32 - a as i32) * self.step as i32)
    }
}

/// Splits a set of discretized angles into maximal circular runs, ordered by
/// their starting angle. A full circle yields one run starting at 0.
pub fn split_components(angles: &[u32], step: u32) -> Vec<AngularComponent> {
    assert!(step > 0 && 360 % step == 0, "angle step must divide 360");
    let slots = (360 / step) as usize;
    let mut present = vec![false; slots];
    for &a in angles {
        let a = wrap_deg(a as i64);
        if a.is_multiple_of(step) {
            present[(a / step) as usize] = true;
        }
    }
    let total = present.iter().filter(|p| **p).count();
    if total == 0 {
        return Vec::new();
    }
    if total == slots {
        return vec![AngularComponent::full(step)];
    }
    let mut out = Vec::new();
    for s in 0..slots {
        if present[s] && !present[(s + slots - 1) % slots] {
            let mut count = 0;
            while present[(s + count) % slots] {
                count += 1;
            }
            out.push(AngularComponent {
                start: s as u32 * step,
                count: count as u32,
                step,
            });
        }
    }
    out
}
