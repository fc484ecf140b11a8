//! Distributed information fusion.
//!
//! Each UAV runs a local constant-velocity Kalman filter per known target,
//! scores every estimate by its perceptual confidence `rho = 1 / trace(P)`,
//! and then takes part in synchronous max-consensus rounds with its
//! neighbours: visiting-time maps are merged cellwise by `max`, and for every
//! target the whole `(s, P, rho)` triple of the most confident holder wins.
//! A node stops updating after `D_i` rounds, the diameter of the BFS
//! shortest-path tree rooted at it.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evtm::{Evtm, LocalMap};
use crate::grid::Cell;
use crate::sensing::{Measurement, SensorParams};
use crate::world::{wrap_angle, CommGraph, UavState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("innovation covariance is singular for target {0}")]
    SingularInnovation(usize),
}

/// Filter and track-lifecycle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// White-acceleration process noise intensity, m^2/s^3.
    pub q_a: f64,
    /// Initial position variance, m^2.
    pub p0_pos: f64,
    /// Initial velocity variance, (m/s)^2.
    pub p0_vel: f64,
    /// Steps without any measurement before a track is dropped.
    pub k_lost: u64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            q_a: 0.5,
            p0_pos: 100.0,
            p0_vel: 25.0,
            k_lost: 30,
        }
    }
}

/// State ordering is `(x, xdot, y, ydot)`.
pub type State = Vector4<f64>;
pub type Cov = Matrix4<f64>;

/// Confidence of a covariance: `1 / trace(P)`.
pub fn confidence(p: &Cov) -> f64 {
    1.0 / p.trace()
}

pub fn cv_transition(dt: f64) -> Cov {
    Matrix4::new(
        1.0, dt, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, dt, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub fn cv_process_noise(dt: f64, q_a: f64) -> Cov {
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    Matrix4::new(
        a, b, 0.0, 0.0, //
        b, c, 0.0, 0.0, //
        0.0, 0.0, a, b, //
        0.0, 0.0, b, c,
    ) * q_a
}

/// One row of a UAV's target information table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub target_id: usize,
    /// Local estimate after this step's own filtering.
    pub s_hat: State,
    pub p_hat: Cov,
    pub rho_hat: f64,
    /// Estimate after fusion with the component.
    pub s_bar: State,
    pub p_bar: Cov,
    /// Step of the newest measurement folded into the fused estimate.
    pub last_update: u64,
}

impl TrackEntry {
    /// Starts a track at the measured position with zero velocity.
    pub fn birth(z: &Measurement, uav: &UavState, params: &FilterParams) -> Self {
        let (s, c) = z.bearing.sin_cos();
        let s_hat = Vector4::new(uav.x + z.range * c, 0.0, uav.y + z.range * s, 0.0);
        let p_hat = Matrix4::from_diagonal(&Vector4::new(params.p0_pos, params.p0_vel, params.p0_pos, params.p0_vel));
        Self {
            target_id: z.target_id,
            s_hat,
            p_hat,
            rho_hat: confidence(&p_hat),
            s_bar: s_hat,
            p_bar: p_hat,
            last_update: z.stamp,
        }
    }

    pub fn fused_confidence(&self) -> f64 {
        confidence(&self.p_bar)
    }

    pub fn fused_position(&self) -> (f64, f64) {
        (self.s_bar[0], self.s_bar[2])
    }

    pub fn share(&self) -> TrackShare {
        TrackShare {
            target_id: self.target_id,
            s: self.s_hat,
            p: self.p_hat,
            rho: self.rho_hat,
            last_update: self.last_update,
        }
    }
}

/// Constant-velocity prediction of the fused estimate into the local slot.
pub fn kalman_predict(entry: &TrackEntry, dt: f64, q_a: f64) -> TrackEntry {
    let f = cv_transition(dt);
    let s_hat = f * entry.s_bar;
    let p_hat = symmetrize(f * entry.p_bar * f.transpose() + cv_process_noise(dt, q_a));
    TrackEntry {
        s_hat,
        p_hat,
        rho_hat: confidence(&p_hat),
        ..entry.clone()
    }
}

/// Extended Kalman update of the local estimate with a range-bearing
/// measurement taken from `uav`. Uses the Joseph form so the covariance
/// stays symmetric positive definite.
pub fn kalman_update(
    entry: &TrackEntry,
    z: &Measurement,
    uav: &UavState,
    sensor: &SensorParams,
) -> Result<TrackEntry, FilterError> {
    let dx = entry.s_hat[0] - uav.x;
    let dy = entry.s_hat[2] - uav.y;
    let r2 = (dx * dx + dy * dy).max(1e-6);
    let r = r2.sqrt();
    let h = Matrix2x4::new(
        dx / r, 0.0, dy / r, 0.0, //
        -dy / r2, 0.0, dx / r2, 0.0,
    );
    let rn = Matrix2::new(sensor.sigma_r.powi(2), 0.0, 0.0, sensor.sigma_theta.powi(2));
    let innov = Vector2::new(z.range - r, wrap_angle(z.bearing - dy.atan2(dx)));
    let s = h * entry.p_hat * h.transpose() + rn;
    let s_inv = s.try_inverse().ok_or(FilterError::SingularInnovation(entry.target_id))?;
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(FilterError::SingularInnovation(entry.target_id));
    }
    let k = entry.p_hat * h.transpose() * s_inv;
    let s_hat = entry.s_hat + k * innov;
    let ikh = Matrix4::identity() - k * h;
    let p_hat = symmetrize(ikh * entry.p_hat * ikh.transpose() + k * rn * k.transpose());
    Ok(TrackEntry {
        s_hat,
        p_hat,
        rho_hat: confidence(&p_hat),
        last_update: z.stamp,
        ..entry.clone()
    })
}

fn symmetrize(p: Cov) -> Cov {
    (p + p.transpose()) * 0.5
}

/// The `(s, P, rho)` triple exchanged for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackShare {
    pub target_id: usize,
    pub s: State,
    pub p: Cov,
    pub rho: f64,
    pub last_update: u64,
}

/// Target information table owned by one UAV.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackTable {
    pub owner: usize,
    entries: BTreeMap<usize, TrackEntry>,
}

impl TrackTable {
    pub fn new(owner: usize) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, target_id: usize) -> Option<&TrackEntry> {
        self.entries.get(&target_id)
    }

    pub fn insert(&mut self, entry: TrackEntry) {
        self.entries.insert(entry.target_id, entry);
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrackEntry> {
        self.entries.values()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    /// Local filtering for one step: predict every track from its fused
    /// estimate, fold in this step's measurements (starting tracks for
    /// unknown targets) and drop tracks without a measurement for more than
    /// `k_lost` steps.
    pub fn local_update(
        &mut self,
        measurements: &[Measurement],
        uav: &UavState,
        step: u64,
        dt: f64,
        filter: &FilterParams,
        sensor: &SensorParams,
    ) {
        for entry in self.entries.values_mut() {
            *entry = kalman_predict(entry, dt, filter.q_a);
        }
        for z in measurements {
            match self.entries.get(&z.target_id) {
                Some(entry) => match kalman_update(entry, z, uav, sensor) {
                    Ok(updated) => {
                        self.entries.insert(z.target_id, updated);
                    }
                    Err(e) => log::warn!("uav {}: dropping update: {e}", self.owner),
                },
                None => {
                    self.entries.insert(z.target_id, TrackEntry::birth(z, uav, filter));
                }
            }
        }
        self.entries
            .retain(|_, e| step.saturating_sub(e.last_update) <= filter.k_lost);
    }

    pub fn shares(&self) -> BTreeMap<usize, TrackShare> {
        self.entries.iter().map(|(&id, e)| (id, e.share())).collect()
    }

    /// Installs the post-consensus triples as fused estimates.
    pub fn absorb_fused(&mut self, fused: &BTreeMap<usize, TrackShare>) {
        for (&id, share) in fused {
            let entry = self.entries.entry(id).or_insert_with(|| TrackEntry {
                target_id: id,
                s_hat: share.s,
                p_hat: share.p,
                rho_hat: share.rho,
                s_bar: share.s,
                p_bar: share.p,
                last_update: share.last_update,
            });
            entry.s_bar = share.s;
            entry.p_bar = share.p;
            entry.last_update = share.last_update;
        }
    }
}

/// Message sent to every neighbour in a fusion round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionMessage {
    pub sender: usize,
    pub uav_state: UavState,
    pub local_map: LocalMap,
    pub tracks: Vec<TrackShare>,
}

/// Diameter (in hops) of the BFS shortest-path tree rooted at `root`,
/// restricted to the root's component. Lower-id neighbours are discovered
/// first, so the tree is deterministic.
pub fn spt_diameter(g: &CommGraph, root: usize) -> usize {
    let n = g.len();
    let mut parent = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut tree: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = u;
                tree[u].push(v);
                tree[v].push(u);
                queue.push_back(v);
            }
        }
    }
    let far = |start: usize| -> (usize, usize) {
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut best = (start, 0);
        while let Some(u) = q.pop_front() {
            if dist[u] > best.1 {
                best = (u, dist[u]);
            }
            for &v in &tree[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        best
    };
    let (a, _) = far(root);
    far(a).1
}

/// One synchronous max-consensus update of a node's working state.
///
/// Maps are merged cellwise; for each target the triple with the largest
/// `rho` among the node and the senders wins, ties going to the lowest UAV
/// id. Targets unknown to the node are adopted.
pub fn fuse_round(
    own_id: usize,
    map: &mut Evtm,
    tracks: &mut BTreeMap<usize, TrackShare>,
    inbox: &[FusionMessage],
) {
    for msg in inbox {
        map.merge_max(&msg.local_map);
    }
    let mut best: BTreeMap<usize, (f64, usize, &TrackShare)> = BTreeMap::new();
    for (id, share) in tracks.iter() {
        best.insert(*id, (share.rho, own_id, share));
    }
    for msg in inbox {
        for share in &msg.tracks {
            let cand = (share.rho, msg.sender, share);
            best.entry(share.target_id)
                .and_modify(|cur| {
                    if cand.0 > cur.0 || (cand.0 == cur.0 && cand.1 < cur.1) {
                        *cur = cand;
                    }
                })
                .or_insert(cand);
        }
    }
    let merged: BTreeMap<usize, TrackShare> =
        best.into_iter().map(|(id, (_, _, s))| (id, s.clone())).collect();
    *tracks = merged;
}

/// Working state of one UAV during the fusion phase.
#[derive(Debug, Clone)]
pub struct FusionNode {
    pub id: usize,
    pub state: UavState,
    pub anchor: Cell,
    pub map: Evtm,
    pub tracks: BTreeMap<usize, TrackShare>,
}

impl FusionNode {
    fn message(&self, window: usize, t_now: f64) -> FusionMessage {
        FusionMessage {
            sender: self.id,
            uav_state: self.state,
            local_map: self.map.extract(self.anchor, window, t_now),
            tracks: self.tracks.values().cloned().collect(),
        }
    }
}

/// Runs the synchronous exchange rounds for all nodes. `graph` is indexed
/// by position in `nodes`. Returns the number of rounds `D_i` each node ran.
///
/// Every node keeps answering with its current state after it stops
/// updating, so later rounds of its neighbours still see it.
pub fn run_fusion(nodes: &mut [FusionNode], graph: &CommGraph, window: usize, t_now: f64) -> Vec<usize> {
    assert_eq!(nodes.len(), graph.len());
    let rounds: Vec<usize> = (0..nodes.len()).map(|i| spt_diameter(graph, i)).collect();
    let max_rounds = rounds.iter().copied().max().unwrap_or(0);
    for d in 1..=max_rounds {
        let outbox: Vec<FusionMessage> = nodes.iter().map(|n| n.message(window, t_now)).collect();
        for (i, node) in nodes.iter_mut().enumerate() {
            if d > rounds[i] {
                continue;
            }
            let inbox: Vec<FusionMessage> = graph.neighbors(i).iter().map(|&q| outbox[q].clone()).collect();
            fuse_round(node.id, &mut node.map, &mut node.tracks, &inbox);
        }
    }
    rounds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;
    use crate::sensing::measure;
    use crate::world::TargetTruth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(s: State, p: Cov) -> TrackEntry {
        TrackEntry {
            target_id: 0,
            s_hat: s,
            p_hat: p,
            rho_hat: confidence(&p),
            s_bar: s,
            p_bar: p,
            last_update: 0,
        }
    }

    fn uav_at(x: f64, y: f64) -> UavState {
        UavState { id: 0, x, y, v: 20.0, eta: 0.0, h: 100.0 }
    }

    #[test]
    fn noiseless_predict() {
        let e = entry(Vector4::new(0.0, 5.0, 0.0, 0.0), Matrix4::identity());
        let p = kalman_predict(&e, 1.0, 0.0);
        assert_eq!(p.s_hat, Vector4::new(5.0, 5.0, 0.0, 0.0));
    }

    #[test]
    fn predict_inflates_trace() {
        let e = entry(Vector4::zeros(), Matrix4::identity());
        let p = kalman_predict(&e, 1.0, 0.5);
        assert!(p.p_hat.trace() > e.p_bar.trace());
        assert!(p.rho_hat < e.rho_hat);
    }

    #[test]
    fn two_half_steps_equal_one() {
        let s = Vector4::new(1.0, 2.0, -3.0, 0.5);
        let half = cv_transition(0.5);
        assert!((half * half * s - cv_transition(1.0) * s).norm() < 1e-12);
    }

    #[test]
    fn update_contracts_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sensor = SensorParams::default();
        let u = uav_at(0.0, 0.0);
        let truth = TargetTruth { id: 0, x: 120.0, xdot: 0.0, y: -40.0, ydot: 0.0 };
        let mut e = entry(
            Vector4::new(110.0, 0.0, -30.0, 0.0),
            Matrix4::from_diagonal(&Vector4::new(100.0, 25.0, 100.0, 25.0)),
        );
        for k in 0..50 {
            let z = measure(&u, &truth, k, &sensor, &mut rng).unwrap();
            let upd = kalman_update(&e, &z, &u, &sensor).unwrap();
            assert!(upd.p_hat.trace() <= e.p_hat.trace() + 1e-9);
            assert!(upd.rho_hat > e.rho_hat);
            assert!((upd.rho_hat - 1.0 / upd.p_hat.trace()).abs() < 1e-15);
            e = upd;
        }
    }

    #[test]
    fn filter_converges_to_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sensor = SensorParams { sigma_r: 0.01, sigma_theta: 1e-4, ..Default::default() };
        let u = uav_at(10.0, 10.0);
        let filter = FilterParams::default();
        for trial in 0..20 {
            let truth = TargetTruth { id: 0, x: 100.0 + trial as f64, xdot: 0.0, y: 60.0, ydot: 0.0 };
            let z0 = measure(&u, &truth, 0, &sensor, &mut rng).unwrap();
            let mut e = TrackEntry::birth(&z0, &u, &filter);
            for k in 1..10 {
                e = kalman_predict(&e, 1.0, 0.0);
                let z = measure(&u, &truth, k, &sensor, &mut rng).unwrap();
                e = kalman_update(&e, &z, &u, &sensor).unwrap();
                e.s_bar = e.s_hat;
                e.p_bar = e.p_hat;
            }
            let err = (e.s_hat[0] - truth.x).hypot(e.s_hat[2] - truth.y);
            // cross-range sigma at ~100 m is 1e-2 m, range sigma 1e-2 m
            assert!(err < 10.0 * 0.01 * 1.5, "trial {trial}: err {err}");
        }
    }

    #[test]
    fn table_births_and_expires_tracks() {
        let sensor = SensorParams::default();
        let filter = FilterParams { k_lost: 3, ..Default::default() };
        let u = uav_at(0.0, 0.0);
        let mut table = TrackTable::new(0);
        let z = Measurement { target_id: 4, range: 100.0, bearing: 0.0, stamp: 1 };
        table.local_update(&[z], &u, 1, 1.0, &filter, &sensor);
        let e = table.get(4).unwrap();
        assert!((e.s_hat[0] - 100.0).abs() < 1e-9 && e.s_hat[2].abs() < 1e-9);
        assert_eq!(e.p_hat.diagonal(), Vector4::new(100.0, 25.0, 100.0, 25.0));
        for step in 2..=4 {
            table.local_update(&[], &u, step, 1.0, &filter, &sensor);
            assert!(table.get(4).is_some());
        }
        table.local_update(&[], &u, 5, 1.0, &filter, &sensor);
        assert!(table.get(4).is_none());
    }

    fn path(n: usize) -> CommGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        CommGraph::from_edges(n, &edges)
    }

    #[test]
    fn spt_diameter_examples() {
        assert_eq!(spt_diameter(&CommGraph::empty(1), 0), 0);
        assert_eq!(spt_diameter(&path(3), 1), 2);
        let star = CommGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(spt_diameter(&star, 0), 2);
        // a 4-cycle rooted at 0: BFS tree is 1-0-3 plus 2 under 1, diameter 3
        let cycle = CommGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert_eq!(spt_diameter(&cycle, 0), 3);
        let isolated = CommGraph::from_edges(3, &[(0, 1)]);
        assert_eq!(spt_diameter(&isolated, 2), 0);
    }

    fn share(id: usize, rho: f64, tag: f64) -> TrackShare {
        let p = Matrix4::identity() * (0.25 / rho);
        TrackShare { target_id: id, s: Vector4::repeat(tag), p, rho: confidence(&p), last_update: 0 }
    }

    fn node(id: usize, tracks: &[TrackShare]) -> FusionNode {
        let g = GridGeometry::new(4, 4, 10.0, (0.0, 0.0));
        FusionNode {
            id,
            state: UavState { id, ..uav_at(5.0, 5.0) },
            anchor: (0, 0),
            map: Evtm::new(g, 0.0),
            tracks: tracks.iter().map(|s| (s.target_id, s.clone())).collect(),
        }
    }

    #[test]
    fn empty_inbox_is_identity() {
        let mut n = node(0, &[share(1, 2.0, 1.0)]);
        let (map0, tr0) = (n.map.clone(), n.tracks.clone());
        fuse_round(0, &mut n.map, &mut n.tracks, &[]);
        assert_eq!(n.map, map0);
        assert_eq!(n.tracks, tr0);
    }

    #[test]
    fn higher_confidence_replaces_wholesale() {
        let mut n = node(0, &[share(3, 1.0, 0.0)]);
        let other = node(1, &[share(3, 4.0, 7.0), share(5, 1.0, 2.0)]);
        let msg = other.message(3, 0.0);
        fuse_round(0, &mut n.map, &mut n.tracks, &[msg]);
        assert_eq!(n.tracks[&3], other.tracks[&3]);
        assert_eq!(n.tracks[&5], other.tracks[&5]);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let mut n = node(4, &[share(3, 2.0, 0.0)]);
        let a = node(2, &[share(3, 2.0, 9.0)]);
        let b = node(1, &[share(3, 2.0, 5.0)]);
        let inbox = [a.message(3, 0.0), b.message(3, 0.0)];
        fuse_round(4, &mut n.map, &mut n.tracks, &inbox);
        assert_eq!(n.tracks[&3].s, Vector4::repeat(5.0));
    }

    #[test]
    fn line_of_three_reaches_max() {
        let mut nodes = vec![node(0, &[share(0, 1.0, 1.0)]), node(1, &[share(0, 5.0, 5.0)]), node(2, &[share(0, 3.0, 3.0)])];
        let rounds = run_fusion(&mut nodes, &path(3), 3, 0.0);
        assert_eq!(rounds, vec![2, 2, 2]);
        for n in &nodes {
            assert_eq!(n.tracks[&0], share(0, 5.0, 5.0));
        }
    }

    #[test]
    fn isolated_node_unchanged() {
        let mut nodes = vec![node(0, &[share(0, 1.0, 1.0)])];
        let before = nodes[0].tracks.clone();
        assert_eq!(run_fusion(&mut nodes, &CommGraph::empty(1), 3, 0.0), vec![0]);
        assert_eq!(nodes[0].tracks, before);
    }
}
