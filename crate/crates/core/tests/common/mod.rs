#![allow(dead_code)]

use dmg_core::dmg::{build_dmg, Dmg, FingerModel, NodeId};
use dmg_core::planner::{SearchSpace, State};
use dmg_core::surface::{segment, OrientedSurface, SegmentOptions};

pub fn graph(s: &OrientedSurface<f64>, resolution: f64, angle_step: u32) -> Dmg<f64> {
    let g = segment(s, resolution, &SegmentOptions::default()).unwrap();
    let finger = FingerModel {
        angle_step,
        ..FingerModel::default()
    };
    build_dmg(&g, s, &finger, 0.07).unwrap()
}

/// Bellman-Ford over every state of the space: cheapest cost of reaching
/// `goal_node` at `goal_angle`.
pub fn oracle(space: &SearchSpace<'_, f64>, start: State, goal_node: NodeId, goal_angle: u32) -> Option<f64> {
    let n = space.state_count();
    let edges: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|u| {
            space
                .transitions(space.state(u))
                .into_iter()
                .map(|(t, w, _)| (space.index(t), w))
                .collect()
        })
        .collect();
    let mut dist = vec![f64::INFINITY; n];
    dist[space.index(start)] = 0.0;
    loop {
        let mut changed = false;
        for u in 0..n {
            if dist[u].is_infinite() {
                continue;
            }
            for &(v, w) in &edges[u] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n)
        .filter(|&u| {
            let s = space.state(u);
            s.node == goal_node && s.angle == goal_angle
        })
        .map(|u| dist[u])
        .filter(|d| d.is_finite())
        .reduce(f64::min)
}
