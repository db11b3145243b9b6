//! Random-waypoint movement in a rectangle and range-based contact detection.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::group_net::PeerId;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityParams {
    /// Width and height in metres.
    pub area: (f64, f64),
    /// Minimum and maximum speed in m/s.
    pub speed: (f64, f64),
    /// Seconds spent at each waypoint.
    pub pause: f64,
    /// Communication range in metres.
    pub range: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams { area: (1000.0, 1000.0), speed: (0.5, 1.5), pause: 60.0, range: 50.0 }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        let (w, h) = self.area;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err("area must be positive");
        }
        let (lo, hi) = self.speed;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err("speeds must satisfy 0 < v_min <= v_max");
        }
        if !(self.pause >= 0.0) {
            return Err("pause must be nonnegative");
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err("range must be positive");
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.area.0).contains(&p.x) && (0.0..=self.area.1).contains(&p.y)
    }

    fn clamp(&self, p: Point) -> Point {
        Point { x: p.x.clamp(0.0, self.area.0), y: p.y.clamp(0.0, self.area.1) }
    }

    fn random_point(&self, rng: &mut SplitMix64) -> Point {
        Point { x: rng.uniform(0.0, self.area.0), y: rng.uniform(0.0, self.area.1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub peer: PeerId,
    pub position: Point,
    pub waypoint: Point,
    pub speed: f64,
    /// Simulated second at which the current pause ends.
    pub pause_until: f64,
}

impl NodeState {
    pub fn stationary(peer: PeerId, at: Point) -> Self {
        NodeState { peer, position: at, waypoint: at, speed: 0.0, pause_until: f64::INFINITY }
    }

    /// Uniform start position, waypoint and speed.
    pub fn random(peer: PeerId, params: &MobilityParams, rng: &mut SplitMix64) -> Self {
        let position = params.random_point(rng);
        let waypoint = params.random_point(rng);
        let speed = rng.uniform(params.speed.0, params.speed.1);
        NodeState { peer, position, waypoint, speed, pause_until: 0.0 }
    }
}

/// Advances every node by `dt` seconds starting at simulated second `now`.
///
/// A node moves straight to its waypoint. On arrival it draws the next
/// waypoint and speed and then rests for `params.pause` seconds.
pub fn step(states: &mut [NodeState], params: &MobilityParams, now: f64, dt: f64, rng: &mut SplitMix64) {
    for node in states.iter_mut() {
        let mut t = now;
        let end = now + dt;
        while t < end {
            if node.pause_until > t {
                t = node.pause_until.min(end);
                continue;
            }
            if node.speed <= 0.0 {
                break;
            }
            let dist = libm::sqrt(node.position.distance_sq(node.waypoint));
            let reach = node.speed * (end - t);
            if reach >= dist {
                t += if dist > 0.0 { dist / node.speed } else { 0.0 };
                node.position = node.waypoint;
                node.waypoint = params.random_point(rng);
                node.speed = rng.uniform(params.speed.0, params.speed.1);
                node.pause_until = t + params.pause;
            } else {
                let f = reach / dist;
                let p = Point {
                    x: node.position.x + (node.waypoint.x - node.position.x) * f,
                    y: node.position.y + (node.waypoint.y - node.position.y) * f,
                };
                node.position = params.clamp(p);
                t = end;
            }
        }
    }
}

/// Unordered pairs `(a, b)` with `a < b` whose distance is at most `range`.
pub fn contacts(states: &[NodeState], range: f64) -> BTreeSet<(PeerId, PeerId)> {
    let r2 = range * range;
    let mut out = BTreeSet::new();
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            if a.peer != b.peer && a.position.distance_sq(b.position) <= r2 {
                out.insert(if a.peer < b.peer { (a.peer, b.peer) } else { (b.peer, a.peer) });
            }
        }
    }
    out
}

/// Positions in peer order, convenient for traces and tests.
pub fn positions(states: &[NodeState]) -> Vec<(PeerId, Point)> {
    let mut v: Vec<_> = states.iter().map(|s| (s.peer, s.position)).collect();
    v.sort_by_key(|(p, _)| *p);
    v
}
