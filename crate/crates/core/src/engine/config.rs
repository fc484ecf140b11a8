//! Scenario configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::CoverageParams;
use crate::evtm::CurveParams;
use crate::fusion::FilterParams;
use crate::grid::GridGeometry;
use crate::sensing::SensorParams;
use crate::tracking::ActionSet;
use crate::world::{KinematicLimits, TargetMotion};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaConfig {
    pub width: f64,
    pub height: f64,
    pub cell: f64,
}

impl Default for AreaConfig {
    fn default() -> Self {
        Self { width: 2500.0, height: 2500.0, cell: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavConfig {
    pub count: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub dv_max: f64,
    pub omega_max: f64,
    pub altitude: f64,
    pub r_o: f64,
    pub r_c: f64,
}

impl Default for UavConfig {
    fn default() -> Self {
        let k = KinematicLimits::default();
        Self {
            count: 7,
            v_min: k.v_min,
            v_max: k.v_max,
            dv_max: k.dv_max,
            omega_max: k.omega_max,
            altitude: 100.0,
            r_o: SensorParams::default().r_o,
            r_c: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub count: usize,
    pub p_turn: f64,
    pub theta_turn: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        let m = TargetMotion::default();
        Self {
            count: 4,
            p_turn: m.p_turn,
            theta_turn: m.theta_turn,
            speed_min: m.speed_min,
            speed_max: m.speed_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub w_p1: f64,
    pub w_p2: f64,
    pub w_p3: f64,
    pub sigma_r: f64,
    pub sigma_theta: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let s = SensorParams::default();
        Self { w_p1: s.w_p1, w_p2: s.w_p2, w_p3: s.w_p3, sigma_r: s.sigma_r, sigma_theta: s.sigma_theta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub alpha: f64,
    pub beta: f64,
    pub t_c: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        let c = CurveParams::default();
        Self { alpha: c.alpha, beta: c.beta, t_c: c.t_c }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvtmConfig {
    /// Side of the exchanged map window, cells (odd).
    pub window: usize,
    pub t0: f64,
}

impl Default for EvtmConfig {
    fn default() -> Self {
        Self { window: 31, t0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub horizon: usize,
    pub exhaustive: bool,
    pub max_trackers: usize,
    pub k_lost: u64,
    pub q_a: f64,
    pub p0_pos: f64,
    pub p0_vel: f64,
    pub dv_levels: usize,
    pub omega_levels: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        let f = FilterParams::default();
        Self {
            horizon: 3,
            exhaustive: false,
            max_trackers: 2,
            k_lost: f.k_lost,
            q_a: f.q_a,
            p0_pos: f.p0_pos,
            p0_vel: f.p0_vel,
            dv_levels: 3,
            omega_levels: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub k_o: f64,
    pub k_c: f64,
    pub k_a: f64,
    pub w_f: f64,
    pub w_q: f64,
    pub w_a: f64,
    /// Defaults to 1.5 times the communication range.
    pub d_c: Option<f64>,
    pub d_o: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        let p = CoverageParams::default();
        Self { k_o: p.k_o, k_c: p.k_c, k_a: p.k_a, w_f: p.w_f, w_q: p.w_q, w_a: p.w_a, d_c: None, d_o: p.d_o }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub steps: u64,
    pub dt: f64,
    pub seed: u64,
    /// Every UAV covers; no tracking or assignment.
    pub coverage_only: bool,
    /// Record assignment wall time in the metrics (makes them
    /// non-reproducible).
    pub timing: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { steps: 1500, dt: 1.0, seed: 0, coverage_only: false, timing: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area: AreaConfig,
    pub uav: UavConfig,
    pub targets: TargetConfig,
    pub sensor: SensorConfig,
    pub curve: CurveConfig,
    pub evtm: EvtmConfig,
    pub tracking: TrackingConfig,
    pub coverage: CoverageConfig,
    pub sim: SimConfig,
}

/// Keys that sweeps may vary.
pub const SWEEP_AXES: &[&str] = &["uav.count", "uav.r_c", "targets.count", "sim.steps"];

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// Sets one sweepable key from its textual value.
    pub fn set_axis(&mut self, axis: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || invalid(axis, format!("cannot parse `{value}`"));
        match axis {
            "uav.count" => self.uav.count = value.parse().map_err(|_| bad())?,
            "uav.r_c" => self.uav.r_c = value.parse().map_err(|_| bad())?,
            "targets.count" => self.targets.count = value.parse().map_err(|_| bad())?,
            "sim.steps" => self.sim.steps = value.parse().map_err(|_| bad())?,
            _ => return Err(invalid(axis, format!("not a sweep axis; expected one of {}", SWEEP_AXES.join(", ")))),
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be non-negative, got {v}")))
            }
        };
        positive("area.width", self.area.width)?;
        positive("area.height", self.area.height)?;
        positive("area.cell", self.area.cell)?;
        if self.uav.count == 0 {
            return Err(invalid("uav.count", "at least one UAV is required"));
        }
        positive("uav.v_min", self.uav.v_min)?;
        if self.uav.v_max < self.uav.v_min {
            return Err(invalid("uav.v_max", "must not be below uav.v_min"));
        }
        non_negative("uav.dv_max", self.uav.dv_max)?;
        non_negative("uav.omega_max", self.uav.omega_max)?;
        positive("uav.r_o", self.uav.r_o)?;
        positive("uav.r_c", self.uav.r_c)?;
        if !(0.0..=1.0).contains(&self.targets.p_turn) {
            return Err(invalid("targets.p_turn", "must lie in [0, 1]"));
        }
        non_negative("targets.speed_min", self.targets.speed_min)?;
        if self.targets.speed_max < self.targets.speed_min {
            return Err(invalid("targets.speed_max", "must not be below targets.speed_min"));
        }
        positive("sensor.w_p2", self.sensor.w_p2)?;
        non_negative("sensor.w_p1", self.sensor.w_p1)?;
        non_negative("sensor.w_p3", self.sensor.w_p3)?;
        positive("sensor.sigma_r", self.sensor.sigma_r)?;
        positive("sensor.sigma_theta", self.sensor.sigma_theta)?;
        positive("curve.alpha", self.curve.alpha)?;
        positive("curve.beta", self.curve.beta)?;
        positive("curve.t_c", self.curve.t_c)?;
        if self.evtm.window.is_multiple_of(2) {
            return Err(invalid("evtm.window", "must be odd"));
        }
        if self.tracking.horizon == 0 {
            return Err(invalid("tracking.horizon", "must be at least 1"));
        }
        if self.tracking.max_trackers == 0 {
            return Err(invalid("tracking.max_trackers", "must be at least 1"));
        }
        if self.tracking.dv_levels.is_multiple_of(2) {
            return Err(invalid("tracking.dv_levels", "must be odd"));
        }
        if self.tracking.omega_levels.is_multiple_of(2) {
            return Err(invalid("tracking.omega_levels", "must be odd"));
        }
        non_negative("tracking.q_a", self.tracking.q_a)?;
        positive("tracking.p0_pos", self.tracking.p0_pos)?;
        positive("tracking.p0_vel", self.tracking.p0_vel)?;
        for (k, v) in [
            ("coverage.k_o", self.coverage.k_o),
            ("coverage.k_c", self.coverage.k_c),
            ("coverage.k_a", self.coverage.k_a),
            ("coverage.w_f", self.coverage.w_f),
            ("coverage.w_q", self.coverage.w_q),
            ("coverage.w_a", self.coverage.w_a),
        ] {
            non_negative(k, v)?;
        }
        if let Some(d_c) = self.coverage.d_c {
            positive("coverage.d_c", d_c)?;
        }
        positive("coverage.d_o", self.coverage.d_o)?;
        positive("sim.dt", self.sim.dt)?;
        Ok(())
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::covering(self.area.width, self.area.height, self.area.cell)
    }

    pub fn limits(&self) -> KinematicLimits {
        KinematicLimits {
            v_min: self.uav.v_min,
            v_max: self.uav.v_max,
            dv_max: self.uav.dv_max,
            omega_max: self.uav.omega_max,
        }
    }

    pub fn sensor(&self) -> SensorParams {
        SensorParams {
            w_p1: self.sensor.w_p1,
            w_p2: self.sensor.w_p2,
            w_p3: self.sensor.w_p3,
            r_o: self.uav.r_o,
            sigma_r: self.sensor.sigma_r,
            sigma_theta: self.sensor.sigma_theta,
        }
    }

    pub fn curve(&self) -> CurveParams {
        CurveParams { alpha: self.curve.alpha, beta: self.curve.beta, t_c: self.curve.t_c }
    }

    pub fn motion(&self) -> TargetMotion {
        TargetMotion {
            p_turn: self.targets.p_turn,
            theta_turn: self.targets.theta_turn,
            speed_min: self.targets.speed_min,
            speed_max: self.targets.speed_max,
        }
    }

    pub fn filter(&self) -> FilterParams {
        FilterParams {
            q_a: self.tracking.q_a,
            p0_pos: self.tracking.p0_pos,
            p0_vel: self.tracking.p0_vel,
            k_lost: self.tracking.k_lost,
        }
    }

    pub fn coverage_params(&self) -> CoverageParams {
        let c = &self.coverage;
        CoverageParams {
            k_o: c.k_o,
            k_c: c.k_c,
            k_a: c.k_a,
            w_f: c.w_f,
            w_q: c.w_q,
            w_a: c.w_a,
            d_c: c.d_c.unwrap_or(1.5 * self.uav.r_c),
            d_o: c.d_o,
        }
    }

    pub fn actions(&self) -> ActionSet {
        ActionSet::grid(&self.limits(), self.tracking.dv_levels, self.tracking.omega_levels)
    }

    /// First step of the steady-state window used for summary `t_IMT`.
    pub fn steady_state_start(&self) -> u64 {
        (2.0 * self.curve.t_c / self.sim.dt).ceil() as u64
    }
}

/// Commented TOML listing every key with its default.
pub fn defaults_toml() -> String {
    let d = ScenarioConfig::default();
    format!(
        r#"# Scenario configuration. Every key is optional; the values below are the
# defaults.

[area]
width = {aw:?}        # m
height = {ah:?}       # m
cell = {ac:?}           # grid cell side, m

[uav]
count = {uc}
v_min = {vmin:?}          # m/s
v_max = {vmax:?}          # m/s
dv_max = {dv:?}          # speed change per step, m/s
omega_max = {om:?}  # turn rate, rad/s
altitude = {alt:?}      # m
r_o = {ro:?}           # sensing radius, m
r_c = {rc:?}           # communication range, m

[targets]
count = {tc}
p_turn = {pt:?}        # per-step probability of a heading change
theta_turn = {tt:?}  # maximum heading change, rad
speed_min = {smin:?}      # m/s
speed_max = {smax:?}     # m/s

[sensor]
w_p1 = {w1:?}           # detection curve scale
w_p2 = {w2:?}           # detection curve normalised-distance scale
w_p3 = {w3:?}           # detection curve shape
sigma_r = {sr:?}        # range noise std, m
sigma_theta = {st:?}   # bearing noise std, rad

[curve]
alpha = {al:?}          # visiting-requirement curve scale
beta = {be:?}           # visiting-requirement curve shape
t_c = {tcc:?}          # revisit time threshold, s

[evtm]
window = {win}           # side of the exchanged map window, cells (odd)
t0 = {t0:?}             # initial visit time of every cell, s

[tracking]
horizon = {h}            # planning horizon, steps
exhaustive = {ex}    # enumerate all action sequences instead of greedy
max_trackers = {mt}       # UAVs per target at most
k_lost = {kl}            # steps without a measurement before a track is dropped
q_a = {qa:?}            # process noise intensity, m^2/s^3
p0_pos = {pp:?}       # initial position variance, m^2
p0_vel = {pv:?}        # initial velocity variance, (m/s)^2
dv_levels = {dl}          # speed-change levels in the action set (odd)
omega_levels = {ol}       # turn-rate levels in the action set (odd)

[coverage]
k_o = {ko:?}            # collision-avoidance gain
k_c = {kc:?}            # decentering gain
k_a = {ka:?}            # heading-match sharpness
w_f = {wf:?}            # local coverage reward weight
w_q = {wq:?}            # global search reward weight
w_a = {wa:?}            # heading match weight
# d_c = 600.0         # decentering distance, m (default 1.5 * uav.r_c)
d_o = {dO:?}          # safety distance, m

[sim]
steps = {steps}
dt = {dt:?}             # s
seed = {seed}
coverage_only = {co}
timing = {ti}       # record assignment wall time in metrics.csv
"#,
        aw = d.area.width,
        ah = d.area.height,
        ac = d.area.cell,
        uc = d.uav.count,
        vmin = d.uav.v_min,
        vmax = d.uav.v_max,
        dv = d.uav.dv_max,
        om = d.uav.omega_max,
        alt = d.uav.altitude,
        ro = d.uav.r_o,
        rc = d.uav.r_c,
        tc = d.targets.count,
        pt = d.targets.p_turn,
        tt = d.targets.theta_turn,
        smin = d.targets.speed_min,
        smax = d.targets.speed_max,
        w1 = d.sensor.w_p1,
        w2 = d.sensor.w_p2,
        w3 = d.sensor.w_p3,
        sr = d.sensor.sigma_r,
        st = d.sensor.sigma_theta,
        al = d.curve.alpha,
        be = d.curve.beta,
        tcc = d.curve.t_c,
        win = d.evtm.window,
        t0 = d.evtm.t0,
        h = d.tracking.horizon,
        ex = d.tracking.exhaustive,
        mt = d.tracking.max_trackers,
        kl = d.tracking.k_lost,
        qa = d.tracking.q_a,
        pp = d.tracking.p0_pos,
        pv = d.tracking.p0_vel,
        dl = d.tracking.dv_levels,
        ol = d.tracking.omega_levels,
        ko = d.coverage.k_o,
        kc = d.coverage.k_c,
        ka = d.coverage.k_a,
        wf = d.coverage.w_f,
        wq = d.coverage.w_q,
        wa = d.coverage.w_a,
        dO = d.coverage.d_o,
        steps = d.sim.steps,
        dt = d.sim.dt,
        seed = d.sim.seed,
        co = d.sim.coverage_only,
        ti = d.sim.timing,
    )
}
