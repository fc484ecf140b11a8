//! Per-step event records, written one JSON object per line.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::world::{TargetTruth, UavState};

/// Assignment solved inside one communication component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEvent {
    /// UAV ids, ascending.
    pub members: Vec<usize>,
    /// Target ids known to the component, ascending.
    pub targets: Vec<usize>,
    /// Regime name, absent when there was nothing to assign.
    pub regime: Option<String>,
    /// Lower bound on each member's source arc.
    pub uav_lower: i64,
    /// Per known target: `(lower, upper)` tracker bounds.
    pub target_bounds: Vec<(i64, i64)>,
    /// Per member: tracked target id or `None`.
    pub tasks: Vec<Option<usize>>,
    pub reward: f64,
    /// The solver failed and every member fell back to coverage.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEvent {
    pub uav: usize,
    pub target: usize,
    pub x: f64,
    pub y: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub step: u64,
    pub t: f64,
    /// UAV states after this step's motion, before acting on the decision.
    pub uavs: Vec<UavState>,
    pub targets: Vec<TargetTruth>,
    pub components: Vec<ComponentEvent>,
    /// Per UAV index: tracked target id or `None`.
    pub tasks: Vec<Option<usize>>,
    pub estimates: Vec<EstimateEvent>,
}

/// Re-verifies the assignment constraints recorded in one step.
pub fn check_step(ev: &StepEvent) -> Result<(), String> {
    let mut seen = BTreeMap::new();
    for (ci, c) in ev.components.iter().enumerate() {
        let ctx = |msg: String| format!("step {} component {ci}: {msg}", ev.step);
        if c.fallback {
            return Err(ctx("assignment fell back to coverage".into()));
        }
        if c.tasks.len() != c.members.len() || c.target_bounds.len() != c.targets.len() {
            return Err(ctx("inconsistent record lengths".into()));
        }
        let mut counts = vec![0i64; c.targets.len()];
        for (&m, task) in c.members.iter().zip(&c.tasks) {
            if seen.insert(m, *task).is_some() {
                return Err(ctx(format!("UAV {m} appears in two components")));
            }
            match task {
                Some(t) => {
                    let j = c
                        .targets
                        .iter()
                        .position(|x| x == t)
                        .ok_or_else(|| ctx(format!("UAV {m} tracks unknown target {t}")))?;
                    counts[j] += 1;
                }
                None if c.uav_lower > 0 && !c.targets.is_empty() => {
                    return Err(ctx(format!("UAV {m} left idle although every UAV must track")));
                }
                None => {}
            }
        }
        for ((&t, &(lo, hi)), &n) in c.targets.iter().zip(&c.target_bounds).zip(&counts) {
            if n < lo || n > hi {
                return Err(ctx(format!("target {t} has {n} trackers outside [{lo}, {hi}]")));
            }
        }
    }
    for (i, u) in ev.uavs.iter().enumerate() {
        match seen.get(&u.id) {
            Some(task) if *task == ev.tasks[i] => {}
            Some(_) => return Err(format!("step {}: UAV {} task differs from its component", ev.step, u.id)),
            None => return Err(format!("step {}: UAV {} in no component", ev.step, u.id)),
        }
    }
    Ok(())
}
