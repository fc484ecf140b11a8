//! The integrated per-step loop: move, sense, fuse, score targets, agree on
//! rewards, assign tasks and act.

pub mod config;
pub mod metrics;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assignment::{assemble_matrix, consensus_rewards, flood_rounds, tamm_detailed, RewardRow, Task};
use crate::coverage::{decide, CoverageContext, CoverageParams};
use crate::evtm::{CurveParams, Evtm};
use crate::fusion::{run_fusion, FilterParams, FusionNode, TrackTable};
use crate::grid::GridGeometry;
use crate::sensing::{measure, SensorParams};
use crate::tracking::{plan_tracking, plan_tracking_exhaustive, ActionSet, PlanContext};
use crate::world::{
    comm_graph, connected_components, reflect_in_area, step_target, step_uav, KinematicLimits, TargetMotion,
    TargetTruth, UavCommand, UavState,
};

pub use config::{defaults_toml, ConfigError, ScenarioConfig, SWEEP_AXES};
pub use metrics::{uncovered_time, MetricsRecord, MetricsWriter, RunSummary, SummaryBuilder};
pub use trace::{check_step, ComponentEvent, EstimateEvent, StepEvent};

const STREAM_INIT: u64 = 0;
const STREAM_MOTION: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// State owned by one UAV.
#[derive(Debug, Clone)]
pub struct Agent {
    pub state: UavState,
    pub map: Evtm,
    pub table: TrackTable,
    /// Command decided last step, applied at the start of the next.
    pub pending: UavCommand,
    pub task: Option<usize>,
}

/// Parameters derived once from the configuration.
#[derive(Debug, Clone)]
struct Derived {
    geometry: GridGeometry,
    limits: KinematicLimits,
    sensor: SensorParams,
    curve: CurveParams,
    motion: TargetMotion,
    filter: FilterParams,
    coverage: CoverageParams,
    actions: ActionSet,
    disk: Vec<(i64, i64)>,
}

/// Outcome of one step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub metrics: MetricsRecord,
    pub event: StepEvent,
    /// Measured assignment wall time, ms.
    pub assign_ms: f64,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    d: Derived,
    agents: Vec<Agent>,
    targets: Vec<TargetTruth>,
    last_visit: Vec<f64>,
    rng_motion: ChaCha8Rng,
    rng_noise: ChaCha8Rng,
    step: u64,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let geometry = cfg.geometry();
        let limits = cfg.limits();
        let sensor = cfg.sensor();
        let d = Derived {
            geometry,
            limits,
            sensor,
            curve: cfg.curve(),
            motion: cfg.motion(),
            filter: cfg.filter(),
            coverage: cfg.coverage_params(),
            actions: cfg.actions(),
            disk: geometry.disk_offsets(sensor.r_o),
        };
        let (w, h) = (cfg.area.width, cfg.area.height);
        let mut init = stream(cfg.sim.seed, STREAM_INIT);
        let agents = (0..cfg.uav.count)
            .map(|id| {
                let state = UavState {
                    id,
                    x: init.random_range(0.0..w),
                    y: init.random_range(0.0..h),
                    v: limits.v_min,
                    eta: init.random_range(-PI..PI),
                    h: cfg.uav.altitude,
                };
                Agent {
                    state,
                    map: Evtm::new(geometry, cfg.evtm.t0),
                    table: TrackTable::new(id),
                    pending: UavCommand::ZERO,
                    task: None,
                }
            })
            .collect();
        let targets = (0..cfg.targets.count)
            .map(|id| {
                let x = init.random_range(0.0..w);
                let y = init.random_range(0.0..h);
                let heading = init.random_range(-PI..PI);
                let speed = if cfg.targets.speed_max > cfg.targets.speed_min {
                    init.random_range(cfg.targets.speed_min..cfg.targets.speed_max)
                } else {
                    cfg.targets.speed_min
                };
                TargetTruth { id, x, xdot: speed * heading.cos(), y, ydot: speed * heading.sin() }
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            last_visit: vec![cfg.evtm.t0; geometry.len()],
            d,
            agents,
            targets,
            rng_motion: stream(cfg.sim.seed, STREAM_MOTION),
            rng_noise: stream(cfg.sim.seed, STREAM_NOISE),
            step: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn targets(&self) -> &[TargetTruth] {
        &self.targets
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.d.geometry
    }

    /// Ground-truth time of the last actual visit of every cell.
    pub fn last_visit(&self) -> &[f64] {
        &self.last_visit
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Replaces the UAV states (positions, headings); used to set up
    /// specific geometries.
    pub fn set_uav_states(&mut self, states: &[UavState]) {
        for (a, s) in self.agents.iter_mut().zip(states) {
            a.state = *s;
        }
    }

    pub fn set_targets(&mut self, targets: Vec<TargetTruth>) {
        self.targets = targets;
    }

    fn now(&self) -> f64 {
        self.cfg.evtm.t0 + self.step as f64 * self.cfg.sim.dt
    }

    pub fn run_step(&mut self) -> StepOutput {
        self.step += 1;
        let k = self.step;
        let t = self.now();
        let dt = self.cfg.sim.dt;
        let d = &self.d;

        for tgt in &mut self.targets {
            *tgt = step_target(tgt, dt, &d.motion, &mut self.rng_motion);
            reflect_in_area(tgt, d.geometry.origin, self.cfg.area.width, self.cfg.area.height);
        }
        for a in &mut self.agents {
            a.state = step_uav(&a.state, a.pending, dt, &d.limits);
        }

        for a in &self.agents {
            let lv = &mut self.last_visit;
            d.geometry.for_each_in_disk(a.state.x, a.state.y, d.sensor.r_o, |c, _| lv[d.geometry.index(c)] = t);
        }
        let observed: Vec<bool> = self
            .targets
            .iter()
            .map(|tg| self.agents.iter().any(|a| (tg.x - a.state.x).hypot(tg.y - a.state.y) <= d.sensor.r_o))
            .collect();

        for a in &mut self.agents {
            a.map.observe(a.state.pos(), &d.sensor, t, &d.curve);
            let zs: Vec<_> = self
                .targets
                .iter()
                .filter_map(|tg| measure(&a.state, tg, k, &d.sensor, &mut self.rng_noise))
                .collect();
            a.table.local_update(&zs, &a.state, k, dt, &d.filter, &d.sensor);
        }

        let positions: Vec<(f64, f64)> = self.agents.iter().map(|a| a.state.pos()).collect();
        let graph = comm_graph(&positions, self.cfg.uav.r_c);
        let placeholder = Evtm::new(GridGeometry::new(1, 1, 1.0, (0.0, 0.0)), 0.0);
        let mut nodes: Vec<FusionNode> = self
            .agents
            .iter_mut()
            .map(|a| FusionNode {
                id: a.state.id,
                state: a.state,
                anchor: d.geometry.clamped_cell(a.state.x, a.state.y),
                map: std::mem::replace(&mut a.map, placeholder.clone()),
                tracks: a.table.shares(),
            })
            .collect();
        let rounds = run_fusion(&mut nodes, &graph, self.cfg.evtm.window, t);
        for (a, node) in self.agents.iter_mut().zip(nodes) {
            a.map = node.map;
            a.table.absorb_fused(&node.tracks);
        }

        let ids: Vec<usize> = self.agents.iter().map(|a| a.state.id).collect();
        let mut rows: Vec<RewardRow> = vec![BTreeMap::new(); self.agents.len()];
        let mut plans: Vec<BTreeMap<usize, UavCommand>> = vec![BTreeMap::new(); self.agents.len()];
        if !self.cfg.sim.coverage_only {
            let ctx = PlanContext { dt, limits: &d.limits, sensor: &d.sensor };
            for (i, a) in self.agents.iter().enumerate() {
                for e in a.table.iter() {
                    let plan = if self.cfg.tracking.exhaustive {
                        plan_tracking_exhaustive(&a.state, &e.s_bar, &d.actions, self.cfg.tracking.horizon, ctx)
                    } else {
                        plan_tracking(&a.state, &e.s_bar, &d.actions, self.cfg.tracking.horizon, ctx)
                    };
                    rows[i].insert(e.target_id, plan.reward);
                    plans[i].insert(e.target_id, plan.first());
                }
            }
        }
        let known = consensus_rewards(&graph, &ids, &rows, &flood_rounds(&graph));

        let started = Instant::now();
        let mut components = Vec::new();
        let mut tasks: Vec<Option<usize>> = vec![None; self.agents.len()];
        for comp in connected_components(&graph) {
            let members: Vec<usize> = comp.iter().map(|&i| ids[i]).collect();
            let rows_here = &known[comp[0]];
            debug_assert!(comp.iter().all(|&i| known[i] == *rows_here));
            let target_ids: Vec<usize> =
                rows_here.values().flat_map(|r| r.keys().copied()).collect::<BTreeSet<_>>().into_iter().collect();
            let caps = vec![self.cfg.tracking.max_trackers; target_ids.len()];
            let r = assemble_matrix(rows_here, &members, &target_ids);
            let mut ev = ComponentEvent {
                members: members.clone(),
                targets: target_ids.clone(),
                regime: None,
                uav_lower: 0,
                target_bounds: Vec::new(),
                tasks: vec![None; members.len()],
                reward: 0.0,
                fallback: false,
            };
            if !target_ids.is_empty() {
                match tamm_detailed(&r, &caps) {
                    Ok(out) => {
                        ev.regime = Some(out.regime.name().to_string());
                        ev.uav_lower = out.regime.uav_bounds().0;
                        ev.target_bounds = caps.iter().map(|&c| out.regime.target_bounds(c)).collect();
                        ev.reward = out.reward;
                        for (m, task) in out.assignment.tasks.iter().enumerate() {
                            if let Task::Track(j) = task {
                                ev.tasks[m] = Some(target_ids[*j]);
                            }
                        }
                    }
                    Err(e) => {
                        log::warn!("step {k}: assignment for UAVs {members:?} failed, all cover: {e}");
                        ev.fallback = true;
                        ev.target_bounds = vec![(0, 0); target_ids.len()];
                    }
                }
            }
            for (&i, task) in comp.iter().zip(&ev.tasks) {
                tasks[i] = *task;
            }
            components.push(ev);
        }
        let assign_ms = started.elapsed().as_secs_f64() * 1e3;

        let ctx = CoverageContext {
            params: &d.coverage,
            curve: &d.curve,
            limits: &d.limits,
            disk: &d.disk,
            dt,
        };
        let states: Vec<UavState> = self.agents.iter().map(|a| a.state).collect();
        for (i, a) in self.agents.iter_mut().enumerate() {
            a.task = tasks[i];
            a.pending = match tasks[i].and_then(|j| plans[i].get(&j)) {
                Some(cmd) => *cmd,
                None => {
                    let neighbors: Vec<UavState> = graph.neighbors(i).iter().map(|&q| states[q]).collect();
                    decide(&a.state, &a.map, &neighbors, &[], t, ctx).0
                }
            };
        }

        let metrics = self.metrics(k, t, observed, tasks.clone(), assign_ms, rounds.iter().copied().max().unwrap_or(0));
        let estimates = self
            .agents
            .iter()
            .flat_map(|a| {
                a.table.iter().map(move |e| {
                    let (x, y) = e.fused_position();
                    EstimateEvent { uav: a.state.id, target: e.target_id, x, y, rho: e.fused_confidence() }
                })
            })
            .collect();
        let event = StepEvent { step: k, t, uavs: states, targets: self.targets.clone(), components, tasks, estimates };
        StepOutput { metrics, event, assign_ms }
    }

    fn metrics(
        &self,
        k: u64,
        t: f64,
        observed: Vec<bool>,
        tasks: Vec<Option<usize>>,
        assign_ms: f64,
        fusion_rounds_max: usize,
    ) -> MetricsRecord {
        let t_imt_raw = uncovered_time(&self.last_visit, t);
        let n = self.d.geometry.len();
        let mut newest = vec![f64::NEG_INFINITY; n];
        for a in &self.agents {
            for (m, &v) in newest.iter_mut().zip(a.map.values()) {
                if v > *m {
                    *m = v;
                }
            }
        }
        let t_imt_equiv = uncovered_time(&newest, t);
        let rmse = self
            .targets
            .iter()
            .map(|tg| {
                let errs: Vec<f64> = self
                    .agents
                    .iter()
                    .filter_map(|a| a.table.get(tg.id))
                    .map(|e| {
                        let (x, y) = e.fused_position();
                        (x - tg.x).powi(2) + (y - tg.y).powi(2)
                    })
                    .collect();
                if errs.is_empty() {
                    0.0
                } else {
                    (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
                }
            })
            .collect();
        MetricsRecord {
            step: k,
            t_imt_raw,
            t_imt_equiv,
            observed,
            rmse,
            tasks,
            assign_ms: if self.cfg.sim.timing { assign_ms } else { 0.0 },
            fusion_rounds_max,
        }
    }
}

/// Runs a whole scenario, handing every step to `sink`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    mut sink: impl FnMut(&StepOutput) -> std::io::Result<()>,
) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    let mut sim = Simulation::new(cfg)?;
    let mut summary = SummaryBuilder::new(cfg);
    for _ in 0..cfg.sim.steps {
        let out = sim.run_step();
        summary.add(&out.metrics, out.assign_ms);
        sink(&out)?;
    }
    Ok(summary.finish(cfg, started.elapsed().as_secs_f64()))
}

/// Summary only, no output files.
pub fn run_summary(cfg: &ScenarioConfig) -> Result<RunSummary, RunError> {
    run_scenario(cfg, |_| Ok(()))
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
}

/// Runs a scenario writing `metrics.csv`, `events.jsonl` and
/// `summary.json` into `out_dir`.
pub fn write_run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut metrics = MetricsWriter::new(File::create(out_dir.join("metrics.csv"))?, cfg.targets.count, cfg.uav.count)?;
    let mut events = BufWriter::new(File::create(out_dir.join("events.jsonl"))?);
    let mut failure: Option<RunError> = None;
    let summary = run_scenario(cfg, |out| {
        let res: Result<(), RunError> = (|| {
            metrics.write(&out.metrics)?;
            serde_json::to_writer(&mut events, &out.event)?;
            events.write_all(b"\n")?;
            events.flush()?;
            Ok(())
        })();
        res.map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            std::io::Error::other(msg)
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let summary = summary?;
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests;
