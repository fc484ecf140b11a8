//! Task assignment as min-cost max-flow with lower flow bounds.
//!
//! Each UAV either tracks one target or covers the area. Targets have a
//! quota of trackers and, depending on how many UAVs are available, a
//! minimum as well. The bounded network is reduced to a plain one, solved,
//! and the matched UAV-target arcs are read off.

pub mod mcmf;
pub mod network;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::spt_diameter;
use crate::world::CommGraph;

pub use mcmf::{min_cost_max_flow, McmfResult};
pub use network::{build_network, check_original_flow, eliminate_lower_bounds, map_back, Arc, FlowNetwork, Regime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("reward for UAV {uav}, target {target} is not finite")]
    NonFiniteReward { uav: usize, target: usize },
    #[error("target {0} has a tracker cap of zero")]
    ZeroCap(usize),
    #[error("expected {expected} target caps, got {got}")]
    CapCount { expected: usize, got: usize },
    #[error("bounds cannot be met: max flow {flow} of required {demand}")]
    Infeasible { flow: i64, demand: i64 },
    #[error("internal assignment error: {0}")]
    Internal(String),
}

/// Dense `N_u x N_tau` reward matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardMatrix {
    n_uav: usize,
    n_target: usize,
    data: Vec<f64>,
}

impl RewardMatrix {
    pub fn new(n_uav: usize, n_target: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_uav * n_target, "reward matrix shape");
        Self { n_uav, n_target, data }
    }

    pub fn zeros(n_uav: usize, n_target: usize) -> Self {
        Self::new(n_uav, n_target, vec![0.0; n_uav * n_target])
    }

    /// Panics on ragged rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        Self::from_rows_with_width(rows, width)
    }

    /// Like [`RewardMatrix::from_rows`] but keeps the width when there are
    /// no rows or every row is empty.
    pub fn from_rows_with_width(rows: &[Vec<f64>], width: usize) -> Self {
        assert!(rows.iter().all(|r| r.len() == width), "ragged reward rows");
        Self::new(rows.len(), width, rows.concat())
    }

    pub fn n_uav(&self) -> usize {
        self.n_uav
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_target + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_target + j] = v;
    }

    pub fn max(&self) -> Option<f64> {
        self.data.iter().copied().reduce(f64::max)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_target..(i + 1) * self.n_target]
    }
}

/// Task of one UAV: a target column, or area coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Track(usize),
    Cover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Indexed by UAV row.
    pub tasks: Vec<Task>,
}

impl Assignment {
    pub fn all_cover(n_uav: usize) -> Self {
        Self { tasks: vec![Task::Cover; n_uav] }
    }

    /// Number of trackers per target column.
    pub fn tracker_counts(&self, n_target: usize) -> Vec<usize> {
        let mut c = vec![0; n_target];
        for t in &self.tasks {
            if let Task::Track(j) = t {
                c[*j] += 1;
            }
        }
        c
    }

    pub fn reward(&self, r: &RewardMatrix) -> f64 {
        self.tasks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                Task::Track(j) => Some(r.get(i, *j)),
                Task::Cover => None,
            })
            .sum()
    }
}

/// Full result of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TammOutcome {
    pub assignment: Assignment,
    pub regime: Regime,
    pub reward: f64,
    /// Flow on every original arc, return arc last.
    pub original_flow: Vec<i64>,
    pub network: FlowNetwork,
}

/// Reads the assignment off the UAV-to-target arcs of an original flow.
pub fn extract_assignment(net: &FlowNetwork, original_flow: &[i64]) -> Result<Assignment, AssignmentError> {
    let mut tasks = Vec::with_capacity(net.n_uav);
    for i in 0..net.n_uav {
        let mut task = Task::Cover;
        for j in 0..net.n_target {
            match original_flow[net.match_arc(i, j)] {
                0 => {}
                1 if task == Task::Cover => task = Task::Track(j),
                x => {
                    return Err(AssignmentError::Internal(format!("UAV {i} carries flow {x} to target {j} or several targets")));
                }
            }
        }
        tasks.push(task);
    }
    Ok(Assignment { tasks })
}

fn validate(r: &RewardMatrix, caps: &[usize]) -> Result<(), AssignmentError> {
    if caps.len() != r.n_target() {
        return Err(AssignmentError::CapCount { expected: r.n_target(), got: caps.len() });
    }
    if let Some(j) = caps.iter().position(|&c| c == 0) {
        return Err(AssignmentError::ZeroCap(j));
    }
    for i in 0..r.n_uav() {
        for j in 0..r.n_target() {
            if !r.get(i, j).is_finite() {
                return Err(AssignmentError::NonFiniteReward { uav: i, target: j });
            }
        }
    }
    Ok(())
}

/// Solves one assignment instance and keeps the intermediate flow.
pub fn tamm_detailed(r: &RewardMatrix, caps: &[usize]) -> Result<TammOutcome, AssignmentError> {
    validate(r, caps)?;
    let net = build_network(r, caps);
    if r.n_uav() == 0 || r.n_target() == 0 {
        let mut original_flow: Vec<i64> = net.arcs.iter().map(|a| a.lower).collect();
        original_flow.push(0);
        return Ok(TammOutcome {
            assignment: Assignment::all_cover(r.n_uav()),
            regime: net.regime,
            reward: 0.0,
            original_flow,
            network: net,
        });
    }
    let reduced = eliminate_lower_bounds(&net)?;
    let sol = min_cost_max_flow(reduced.num_vertices, &reduced.arcs, reduced.source, reduced.sink);
    if sol.value < reduced.demand {
        return Err(AssignmentError::Infeasible { flow: sol.value, demand: reduced.demand });
    }
    let original_flow = map_back(&net, &reduced, &sol.flow);
    debug_assert_eq!(check_original_flow(&net, &original_flow), Ok(()));
    let assignment = extract_assignment(&net, &original_flow)?;
    let reward = assignment.reward(r);
    Ok(TammOutcome { assignment, regime: net.regime, reward, original_flow, network: net })
}

/// Reward-maximising assignment of UAV rows to target columns, each target
/// `j` taking at most `caps[j]` trackers.
pub fn tamm(r: &RewardMatrix, caps: &[usize]) -> Result<Assignment, AssignmentError> {
    tamm_detailed(r, caps).map(|o| o.assignment)
}

/// Reward row of one UAV, keyed by target id.
pub type RewardRow = BTreeMap<usize, f64>;

/// Floods reward rows through `graph`. Node `i` starts with its own row
/// (keyed by its UAV id `ids[i]`) and merges its neighbours' row sets for
/// the first `rounds[i]` rounds.
pub fn consensus_rewards(
    graph: &CommGraph,
    ids: &[usize],
    own_rows: &[RewardRow],
    rounds: &[usize],
) -> Vec<BTreeMap<usize, RewardRow>> {
    assert_eq!(graph.len(), own_rows.len());
    assert_eq!(ids.len(), own_rows.len());
    let mut known: Vec<BTreeMap<usize, RewardRow>> =
        ids.iter().zip(own_rows).map(|(&id, row)| BTreeMap::from([(id, row.clone())])).collect();
    let max_rounds = rounds.iter().copied().max().unwrap_or(0);
    for d in 1..=max_rounds {
        let snapshot = known.clone();
        for (i, mine) in known.iter_mut().enumerate() {
            if d > rounds[i] {
                continue;
            }
            for &q in graph.neighbors(i) {
                for (id, row) in &snapshot[q] {
                    mine.entry(*id).or_insert_with(|| row.clone());
                }
            }
        }
    }
    known
}

/// Per-node round counts: the diameter of each node's shortest-path tree.
pub fn flood_rounds(graph: &CommGraph) -> Vec<usize> {
    (0..graph.len()).map(|i| spt_diameter(graph, i)).collect()
}

/// Dense matrix over the given UAV rows and target columns; unknown
/// entries are zero.
pub fn assemble_matrix(rows: &BTreeMap<usize, RewardRow>, uavs: &[usize], targets: &[usize]) -> RewardMatrix {
    let mut r = RewardMatrix::zeros(uavs.len(), targets.len());
    for (i, u) in uavs.iter().enumerate() {
        if let Some(row) = rows.get(u) {
            for (j, t) in targets.iter().enumerate() {
                if let Some(&v) = row.get(t) {
                    r.set(i, j, v);
                }
            }
        }
    }
    r
}
