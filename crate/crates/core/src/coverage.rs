//! Anti-flocking coverage decisions.
//!
//! A coverage UAV scores the 3x3 block of cells around its own cell by a
//! weighted sum of the predicted local coverage reward, the global search
//! reward from the compressed map, and how well the direction to each cell
//! matches the desired separation heading. It then steers to the best cell.

use serde::{Deserialize, Serialize};

use crate::evtm::{requirement_after, CompressedMap, CurveParams, Evtm};
use crate::grid::{Cell, GridGeometry};
use crate::world::{wrap_angle, KinematicLimits, UavCommand, UavState};

pub type Map3 = [[f64; 3]; 3];

/// Separation norms below this count as no separation pressure.
const SEPARATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageParams {
    /// Collision-avoidance gain.
    pub k_o: f64,
    /// Decentering gain.
    pub k_c: f64,
    /// Heading-match sharpness.
    pub k_a: f64,
    pub w_f: f64,
    pub w_q: f64,
    pub w_a: f64,
    /// Distance below which the neighbour centroid repels, m.
    pub d_c: f64,
    /// Safety distance to neighbours and obstacles, m.
    pub d_o: f64,
}

impl CoverageParams {
    /// Defaults with the decentering threshold tied to the comm range.
    pub fn for_comm_range(r_c: f64) -> Self {
        Self {
            k_o: 1.0,
            k_c: 1.0,
            k_a: 2.0,
            w_f: 1.0,
            w_q: 0.5,
            w_a: 0.3,
            d_c: 1.5 * r_c,
            d_o: 100.0,
        }
    }
}

impl Default for CoverageParams {
    fn default() -> Self {
        Self::for_comm_range(400.0)
    }
}

/// Linear compact-support repulsion `max(0, (d0 - d) / d0)`.
pub fn potential(d: f64, d0: f64) -> f64 {
    ((d0 - d) / d0).max(0.0)
}

fn repulsion(from: (f64, f64), at: (f64, f64), d0: f64) -> (f64, f64) {
    let (dx, dy) = (at.0 - from.0, at.1 - from.1);
    let d = dx.hypot(dy);
    if d == 0.0 {
        return (0.0, 0.0);
    }
    let s = potential(d, d0);
    (s * dx / d, s * dy / d)
}

/// Desired separation direction as a unit vector, or `None` when nothing
/// pushes the UAV.
pub fn separation_heading(
    own: &UavState,
    neighbors: &[UavState],
    obstacles: &[(f64, f64)],
    p: &CoverageParams,
) -> Option<(f64, f64)> {
    let me = own.pos();
    let mut sum = (0.0, 0.0);
    for q in neighbors.iter().map(UavState::pos).chain(obstacles.iter().copied()) {
        let r = repulsion(q, me, p.d_o);
        sum.0 += p.k_o * r.0;
        sum.1 += p.k_o * r.1;
    }
    if !neighbors.is_empty() {
        let k = neighbors.len() as f64;
        let c = (
            neighbors.iter().map(|u| u.x).sum::<f64>() / k,
            neighbors.iter().map(|u| u.y).sum::<f64>() / k,
        );
        let r = repulsion(c, me, p.d_c);
        sum.0 += p.k_c * r.0;
        sum.1 += p.k_c * r.1;
    }
    let n = sum.0.hypot(sum.1);
    (n >= SEPARATION_EPS).then(|| (sum.0 / n, sum.1 / n))
}

/// Neighbour cell of `anchor` at 3x3 index `(r, c)`, as signed indices.
fn candidate(anchor: Cell, r: usize, c: usize) -> (i64, i64) {
    (anchor.0 as i64 + r as i64 - 1, anchor.1 as i64 + c as i64 - 1)
}

/// World-frame direction from the UAV to a cell center; the UAV heading
/// when the two coincide.
fn direction_to(own: &UavState, target: (f64, f64)) -> f64 {
    let (dx, dy) = (target.0 - own.x, target.1 - own.y);
    if dx == 0.0 && dy == 0.0 {
        own.eta
    } else {
        dy.atan2(dx)
    }
}

/// `exp(-k_a * wrap(a - b)^2)`.
pub fn heading_match_value(angle: f64, desired: f64, k_a: f64) -> f64 {
    let e = wrap_angle(angle - desired);
    (-k_a * e * e).exp()
}

/// Heading match of the 3x3 candidates around the UAV's cell. Cells that
/// need a turn of at least `omega_max * dt` score zero; with no separation
/// pressure every reachable cell scores one.
pub fn heading_match_map(
    own: &UavState,
    desired: Option<(f64, f64)>,
    p: &CoverageParams,
    limits: &KinematicLimits,
    dt: f64,
    geometry: &GridGeometry,
) -> Map3 {
    let anchor = geometry.clamped_cell(own.x, own.y);
    let desired = desired.map(|(x, y)| y.atan2(x));
    let mut a = [[0.0; 3]; 3];
    for (r, row) in a.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let (m, n) = candidate(anchor, r, c);
            let angle = direction_to(own, geometry.center_signed(m, n));
            if wrap_angle(angle - own.eta).abs() >= limits.omega_max * dt {
                continue;
            }
            *v = desired.map_or(1.0, |d| heading_match_value(angle, d, p.k_a));
        }
    }
    a
}

/// Predicted local coverage reward `F` and global search reward `Q`.
///
/// `F` sums the visiting requirement over the sensing disk (given as cell
/// offsets) centered at each candidate cell; cells off the grid add
/// nothing. `Q` is the normalised age of each compressed block.
pub fn reward_maps(
    evtm: &Evtm,
    compressed: &CompressedMap,
    disk: &[(i64, i64)],
    curve: &CurveParams,
    t_now: f64,
) -> (Map3, Map3) {
    let g = evtm.geometry();
    let anchor = compressed.anchor;
    let k = disk.iter().map(|&(a, b)| a.abs().max(b.abs())).max().unwrap_or(0) + 1;
    let side = (2 * k + 1) as usize;
    let mut lam = vec![0.0; side * side];
    for a in 0..side {
        for b in 0..side {
            let m = anchor.0 as i64 + a as i64 - k;
            let n = anchor.1 as i64 + b as i64 - k;
            if g.contains_signed(m, n) {
                lam[a * side + b] = requirement_after(t_now - evtm.get((m as usize, n as usize)), curve);
            }
        }
    }
    let mut f = [[0.0; 3]; 3];
    let mut q = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut s = 0.0;
            for &(dm, dn) in disk {
                let a = (k + r as i64 - 1 + dm) as usize;
                let b = (k + c as i64 - 1 + dn) as usize;
                s += lam[a * side + b];
            }
            f[r][c] = s;
            q[r][c] = (t_now - compressed.values[r][c]) / curve.t_c;
        }
    }
    (f, q)
}

/// Overall coverage reward map around an anchor cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ocrm {
    pub values: Map3,
    pub anchor: Cell,
    /// Whether each candidate lies on the grid; off-grid cells are never
    /// chosen.
    pub valid: [[bool; 3]; 3],
}

impl Ocrm {
    /// Row-major first maximum over valid candidates.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best: Option<(usize, usize)> = None;
        for r in 0..3 {
            for c in 0..3 {
                if !self.valid[r][c] {
                    continue;
                }
                if best.is_none_or(|(br, bc)| self.values[r][c] > self.values[br][bc]) {
                    best = Some((r, c));
                }
            }
        }
        best.unwrap_or((1, 1))
    }

    /// Grid cell of a 3x3 index.
    pub fn cell_at(&self, r: usize, c: usize) -> (i64, i64) {
        candidate(self.anchor, r, c)
    }
}

/// `J = w_f F + w_q Q + w_a A`.
pub fn ocrm(f: &Map3, q: &Map3, a: &Map3, p: &CoverageParams, anchor: Cell, geometry: &GridGeometry) -> Ocrm {
    let mut values = [[0.0; 3]; 3];
    let mut valid = [[false; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            values[r][c] = p.w_f * f[r][c] + p.w_q * q[r][c] + p.w_a * a[r][c];
            let (m, n) = candidate(anchor, r, c);
            valid[r][c] = geometry.contains_signed(m, n);
        }
    }
    Ocrm { values, anchor, valid }
}

/// Steers toward the best cell of `j`. Returns the command and the chosen
/// cell.
pub fn coverage_command(
    own: &UavState,
    j: &Ocrm,
    geometry: &GridGeometry,
    limits: &KinematicLimits,
    dt: f64,
) -> (UavCommand, Cell) {
    let (r, c) = j.argmax();
    let (m, n) = j.cell_at(r, c);
    let target = geometry.center_signed(m, n);
    let dist = (target.0 - own.x).hypot(target.1 - own.y);
    let heading = direction_to(own, target);
    let dv = (dist / dt - own.v).clamp(-limits.dv_max, limits.dv_max);
    let omega = (wrap_angle(heading - own.eta) / dt).clamp(-limits.omega_max, limits.omega_max);
    (UavCommand::new(dv, omega), (m.max(0) as usize, n.max(0) as usize))
}

/// Everything a coverage UAV needs for one decision.
#[derive(Debug, Clone, Copy)]
pub struct CoverageContext<'a> {
    pub params: &'a CoverageParams,
    pub curve: &'a CurveParams,
    pub limits: &'a KinematicLimits,
    /// Sensing-disk cell offsets.
    pub disk: &'a [(i64, i64)],
    pub dt: f64,
}

/// Full coverage decision from the UAV's own map and its neighbours.
pub fn decide(
    own: &UavState,
    evtm: &Evtm,
    neighbors: &[UavState],
    obstacles: &[(f64, f64)],
    t_now: f64,
    ctx: CoverageContext<'_>,
) -> (UavCommand, Cell) {
    let g = *evtm.geometry();
    let anchor = g.clamped_cell(own.x, own.y);
    let compressed = evtm.compress(anchor, t_now);
    let (f, q) = reward_maps(evtm, &compressed, ctx.disk, ctx.curve, t_now);
    let sep = separation_heading(own, neighbors, obstacles, ctx.params);
    let a = heading_match_map(own, sep, ctx.params, ctx.limits, ctx.dt, &g);
    let j = ocrm(&f, &q, &a, ctx.params, anchor, &g);
    coverage_command(own, &j, &g, ctx.limits, ctx.dt)
}
