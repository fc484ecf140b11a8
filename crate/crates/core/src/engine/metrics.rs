//! Per-step metrics, run summaries and the metrics CSV layout.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;

/// Task label as written to traces: `T<id>` or `Tcoverage`.
pub fn task_label(task: Option<usize>) -> String {
    match task {
        Some(j) => format!("T{j}"),
        None => "Tcoverage".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    /// Mean time since the last actual visit over all cells, s.
    pub t_imt_raw: f64,
    /// Same against the equivalent visit times of the UAV maps.
    pub t_imt_equiv: f64,
    /// Per target: inside at least one sensing disk this step.
    pub observed: Vec<bool>,
    /// Per target: RMSE of the fused position over UAVs holding a track,
    /// 0 when nobody does.
    pub rmse: Vec<f64>,
    /// Per UAV: tracked target id, or `None` for coverage.
    pub tasks: Vec<Option<usize>>,
    /// Assignment wall time in ms; 0 unless timing is enabled.
    pub assign_ms: f64,
    pub fusion_rounds_max: usize,
}

/// Mean of `t_now - visit` over a visit-time map.
pub fn uncovered_time(last_visit: &[f64], t_now: f64) -> f64 {
    if last_visit.is_empty() {
        return 0.0;
    }
    last_visit.iter().map(|&v| t_now - v).sum::<f64>() / last_visit.len() as f64
}

pub fn csv_header(n_target: usize, n_uav: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "t_imt_raw".to_string(), "t_imt_equiv".to_string()];
    for j in 0..n_target {
        h.push(format!("observed_{j}"));
        h.push(format!("rmse_{j}"));
    }
    for i in 0..n_uav {
        h.push(format!("task_{i}"));
    }
    h.push("assign_ms".to_string());
    h.push("fusion_rounds_max".to_string());
    h
}

pub fn csv_row(r: &MetricsRecord) -> Vec<String> {
    let mut row = vec![r.step.to_string(), r.t_imt_raw.to_string(), r.t_imt_equiv.to_string()];
    for (o, e) in r.observed.iter().zip(&r.rmse) {
        row.push(u8::from(*o).to_string());
        row.push(e.to_string());
    }
    row.extend(r.tasks.iter().map(|t| task_label(*t)));
    row.push(r.assign_ms.to_string());
    row.push(r.fusion_rounds_max.to_string());
    row
}

/// Streams records to CSV, flushing every row so an interrupted run leaves
/// a readable prefix.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(w: W, n_target: usize, n_uav: usize) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(csv_header(n_target, n_uav))?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &MetricsRecord) -> csv::Result<()> {
        self.inner.write_record(csv_row(r))?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Aggregates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: u64,
    pub n_uav: usize,
    pub n_target: usize,
    pub r_c: f64,
    /// Mean raw `t_IMT` over the steady-state window (all steps when the
    /// run is shorter than the window start).
    pub mean_t_imt: f64,
    pub mean_t_imt_equiv: f64,
    /// Fraction of steps each target was observed.
    pub observation_rate: Vec<f64>,
    pub mean_observation_rate: f64,
    /// Mean RMSE over steps and targets with a live track.
    pub mean_rmse: f64,
    /// Wall-clock assignment time per step, ms.
    pub mean_assign_ms: f64,
    pub max_assign_ms: f64,
    pub wall_s: f64,
}

/// Running accumulator for [`RunSummary`].
#[derive(Debug, Clone)]
pub struct SummaryBuilder {
    steady_start: u64,
    steps: u64,
    imt_all: (f64, u64),
    imt_steady: (f64, u64),
    equiv_all: (f64, u64),
    equiv_steady: (f64, u64),
    observed: Vec<u64>,
    rmse: (f64, u64),
    assign_ms: (f64, f64),
}

impl SummaryBuilder {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            steady_start: cfg.steady_state_start(),
            steps: 0,
            imt_all: (0.0, 0),
            imt_steady: (0.0, 0),
            equiv_all: (0.0, 0),
            equiv_steady: (0.0, 0),
            observed: vec![0; cfg.targets.count],
            rmse: (0.0, 0),
            assign_ms: (0.0, 0.0),
        }
    }

    /// `wall_assign_ms` is the measured time, independent of whether the
    /// record carries it.
    pub fn add(&mut self, r: &MetricsRecord, wall_assign_ms: f64) {
        self.steps += 1;
        let add = |acc: &mut (f64, u64), v: f64| {
            acc.0 += v;
            acc.1 += 1;
        };
        add(&mut self.imt_all, r.t_imt_raw);
        add(&mut self.equiv_all, r.t_imt_equiv);
        if r.step > self.steady_start {
            add(&mut self.imt_steady, r.t_imt_raw);
            add(&mut self.equiv_steady, r.t_imt_equiv);
        }
        for (c, &o) in self.observed.iter_mut().zip(&r.observed) {
            *c += u64::from(o);
        }
        for &e in &r.rmse {
            if e > 0.0 {
                add(&mut self.rmse, e);
            }
        }
        self.assign_ms.0 += wall_assign_ms;
        self.assign_ms.1 = self.assign_ms.1.max(wall_assign_ms);
    }

    pub fn finish(&self, cfg: &ScenarioConfig, wall_s: f64) -> RunSummary {
        let mean = |acc: (f64, u64)| if acc.1 == 0 { 0.0 } else { acc.0 / acc.1 as f64 };
        let pick = |steady: (f64, u64), all: (f64, u64)| if steady.1 > 0 { mean(steady) } else { mean(all) };
        let observation_rate: Vec<f64> = self
            .observed
            .iter()
            .map(|&c| if self.steps == 0 { 0.0 } else { c as f64 / self.steps as f64 })
            .collect();
        let mean_observation_rate = if observation_rate.is_empty() {
            0.0
        } else {
            observation_rate.iter().sum::<f64>() / observation_rate.len() as f64
        };
        RunSummary {
            seed: cfg.sim.seed,
            steps: self.steps,
            n_uav: cfg.uav.count,
            n_target: cfg.targets.count,
            r_c: cfg.uav.r_c,
            mean_t_imt: pick(self.imt_steady, self.imt_all),
            mean_t_imt_equiv: pick(self.equiv_steady, self.equiv_all),
            observation_rate,
            mean_observation_rate,
            mean_rmse: mean(self.rmse),
            mean_assign_ms: if self.steps == 0 { 0.0 } else { self.assign_ms.0 / self.steps as f64 },
            max_assign_ms: self.assign_ms.1,
            wall_s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uncovered_time_cases() {
        assert_eq!(uncovered_time(&[5.0; 10], 5.0), 0.0);
        assert_eq!(uncovered_time(&[0.0; 10], 100.0), 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let visits: Vec<f64> = (0..500).map(|_| rng.random_range(0..300) as f64).collect();
        let mut oracle = 0.0;
        for v in &visits {
            oracle += 300.0 - v;
        }
        assert!((uncovered_time(&visits, 300.0) - oracle / 500.0).abs() < 1e-9);
    }

    #[test]
    fn header_layout() {
        let h = csv_header(2, 3);
        assert_eq!(
            h,
            [
                "step", "t_imt_raw", "t_imt_equiv", "observed_0", "rmse_0", "observed_1", "rmse_1", "task_0", "task_1", "task_2",
                "assign_ms", "fusion_rounds_max"
            ]
        );
    }

    #[test]
    fn row_matches_header_width() {
        let r = MetricsRecord {
            step: 4,
            t_imt_raw: 1.5,
            t_imt_equiv: 2.0,
            observed: vec![true, false],
            rmse: vec![3.25, 0.0],
            tasks: vec![Some(1), None, Some(0)],
            assign_ms: 0.0,
            fusion_rounds_max: 2,
        };
        let row = csv_row(&r);
        assert_eq!(row.len(), csv_header(2, 3).len());
        assert_eq!(row[3..5], ["1".to_string(), "3.25".to_string()]);
        assert_eq!(row[7..10], ["T1".to_string(), "Tcoverage".to_string(), "T0".to_string()]);
    }

    #[test]
    fn empty_summary_is_zeros() {
        let cfg = ScenarioConfig::default();
        let s = SummaryBuilder::new(&cfg).finish(&cfg, 0.0);
        assert_eq!(s.steps, 0);
        assert_eq!((s.mean_t_imt, s.mean_observation_rate, s.mean_rmse), (0.0, 0.0, 0.0));
        assert!(s.observation_rate.iter().all(|&r| r == 0.0));
    }
}
