//! Ground-truth dynamics: fixed-wing UAV stepping, ground target motion and
//! the range-limited communication graph.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid can land exactly on -pi after the shift for inputs like 3*pi
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Ground speed, m/s.
    pub v: f64,
    /// Heading in `(-pi, pi]`, measured from +x towards +y.
    pub eta: f64,
    /// Altitude, constant for a run.
    pub h: f64,
}

impl UavState {
    pub fn pos(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Acceleration / turn-rate command for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UavCommand {
    pub dv: f64,
    pub omega: f64,
}

impl UavCommand {
    pub const ZERO: UavCommand = UavCommand { dv: 0.0, omega: 0.0 };

    pub fn new(dv: f64, omega: f64) -> Self {
        Self { dv, omega }
    }

    /// Saturates both channels to the actuator limits.
    pub fn clamped(self, limits: &KinematicLimits) -> Self {
        Self {
            dv: self.dv.clamp(-limits.dv_max, limits.dv_max),
            omega: self.omega.clamp(-limits.omega_max, limits.omega_max),
        }
    }

    pub fn within(&self, limits: &KinematicLimits) -> bool {
        self.dv.abs() <= limits.dv_max + 1e-12 && self.omega.abs() <= limits.omega_max + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub dv_max: f64,
    pub omega_max: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self {
            v_min: 15.0,
            v_max: 40.0,
            dv_max: 5.0,
            omega_max: PI / 6.0,
        }
    }
}

/// Advances a UAV by one step of the discrete fixed-wing model.
///
/// Position is integrated with the speed and heading held at the start of
/// the step; speed is clamped to `[v_min, v_max]` after acceleration and the
/// heading is wrapped, never clamped.
pub fn step_uav(state: &UavState, cmd: UavCommand, dt: f64, limits: &KinematicLimits) -> UavState {
    let (s, c) = state.eta.sin_cos();
    UavState {
        x: state.x + state.v * dt * c,
        y: state.y + state.v * dt * s,
        v: (state.v + cmd.dv * dt).clamp(limits.v_min, limits.v_max),
        eta: wrap_angle(state.eta + cmd.omega * dt),
        ..*state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub id: usize,
    pub x: f64,
    pub xdot: f64,
    pub y: f64,
    pub ydot: f64,
}

impl TargetTruth {
    pub fn pos(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn speed(&self) -> f64 {
        self.xdot.hypot(self.ydot)
    }
}

/// Stochastic manoeuvre model for ground targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMotion {
    /// Per-step probability of a heading change.
    pub p_turn: f64,
    /// Half-width of the uniform turn angle distribution, radians.
    pub theta_turn: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for TargetMotion {
    fn default() -> Self {
        Self {
            p_turn: 0.05,
            theta_turn: PI / 4.0,
            speed_min: 3.0,
            speed_max: 10.0,
        }
    }
}

/// Rotates the velocity vector of a target by `angle`.
pub fn rotate_velocity(truth: &TargetTruth, angle: f64) -> TargetTruth {
    let (s, c) = angle.sin_cos();
    TargetTruth {
        xdot: truth.xdot * c - truth.ydot * s,
        ydot: truth.xdot * s + truth.ydot * c,
        ..*truth
    }
}

/// Constant-velocity step followed by a Bernoulli heading perturbation.
///
/// Exactly two draws are taken from `rng` per call (the Bernoulli trial and
/// the turn angle) so that streams stay aligned whatever the outcome.
pub fn step_target<R: Rng + ?Sized>(
    truth: &TargetTruth,
    dt: f64,
    motion: &TargetMotion,
    rng: &mut R,
) -> TargetTruth {
    let mut next = TargetTruth {
        x: truth.x + truth.xdot * dt,
        y: truth.y + truth.ydot * dt,
        ..*truth
    };
    let turn: f64 = rng.random();
    let u: f64 = rng.random();
    if turn < motion.p_turn {
        let angle = motion.theta_turn * (2.0 * u - 1.0);
        next = rotate_velocity(&next, angle);
    }
    let speed = next.speed();
    if speed > motion.speed_max && speed > 0.0 {
        let k = motion.speed_max / speed;
        next.xdot *= k;
        next.ydot *= k;
    }
    next
}

/// Reflects a target off the walls of `[0, width] x [0, height]` (relative to
/// `origin`), flipping the offending velocity component.
pub fn reflect_in_area(truth: &mut TargetTruth, origin: (f64, f64), width: f64, height: f64) {
    let (x0, y0) = origin;
    let (x1, y1) = (x0 + width, y0 + height);
    if truth.x < x0 {
        truth.x = 2.0 * x0 - truth.x;
        truth.xdot = truth.xdot.abs();
    } else if truth.x > x1 {
        truth.x = 2.0 * x1 - truth.x;
        truth.xdot = -truth.xdot.abs();
    }
    if truth.y < y0 {
        truth.y = 2.0 * y0 - truth.y;
        truth.ydot = truth.ydot.abs();
    } else if truth.y > y1 {
        truth.y = 2.0 * y1 - truth.y;
        truth.ydot = -truth.ydot.abs();
    }
    truth.x = truth.x.clamp(x0, x1);
    truth.y = truth.y.clamp(y0, y1);
}

/// Undirected communication graph over UAV indices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    n: usize,
    adj: Vec<Vec<usize>>,
}

impl CommGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from an edge list; duplicates and self-loops are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert!(a < self.n && b < self.n, "vertex out of range");
        if a == b || self.adj[a].contains(&b) {
            return;
        }
        self.adj[a].push(b);
        self.adj[b].push(a);
        self.adj[a].sort_unstable();
        self.adj[b].sort_unstable();
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Sorted neighbour list of `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Edges as `(lo, hi)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nbrs) in self.adj.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    /// Subgraph induced by `members`, re-indexed to `0..members.len()` in the
    /// given order.
    pub fn induced(&self, members: &[usize]) -> CommGraph {
        let mut g = CommGraph::empty(members.len());
        for (li, &a) in members.iter().enumerate() {
            for (lj, &b) in members.iter().enumerate().skip(li + 1) {
                if self.has_edge(a, b) {
                    g.add_edge(li, lj);
                }
            }
        }
        g
    }
}

/// Edges between every pair strictly closer than `r_c`.
pub fn comm_graph(positions: &[(f64, f64)], r_c: f64) -> CommGraph {
    let n = positions.len();
    let mut adj = vec![Vec::new(); n];
    let r2 = r_c * r_c;
    for i in 0..n {
        for q in (i + 1)..n {
            let dx = positions[q].0 - positions[i].0;
            let dy = positions[q].1 - positions[i].1;
            if dx * dx + dy * dy < r2 {
                adj[i].push(q);
                adj[q].push(i);
            }
        }
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
    }
    CommGraph { n, adj }
}

/// Connected components, each sorted ascending, ordered by smallest member.
pub fn connected_components(g: &CommGraph) -> Vec<Vec<usize>> {
    let mut seen = vec![false; g.n];
    let mut comps = Vec::new();
    for start in 0..g.n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}
