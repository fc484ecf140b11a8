//! Equivalent-visiting-time map (EVTM).
//!
//! Every cell stores the *equivalent* time it was last visited. A detection
//! with probability `gamma` credits only part of a visit: the visiting
//! requirement `lambda` of the cell is multiplied by `1 - gamma`, and the
//! stored time is moved to the instant whose S-curve value matches the
//! reduced requirement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, GridGeometry};
use crate::sensing::{detection_probability, SensorParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvtmError {
    #[error("detection probability must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
}

/// Parameters of the visiting-requirement S-curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub alpha: f64,
    pub beta: f64,
    /// Revisit time threshold, seconds.
    pub t_c: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            beta: 0.8,
            t_c: 300.0,
        }
    }
}

/// `lambda = 1 - exp(-alpha * ((t_now - t_visit) / T_c)^beta)`.
pub fn visiting_requirement(t_now: f64, t_visit: f64, p: &CurveParams) -> f64 {
    requirement_after(t_now - t_visit, p)
}

/// New equivalent time of a cell detected with probability `gamma` at
/// `t_now`.
///
/// The returned time `t'` satisfies
/// `lambda(t_now, t') = (1 - gamma) * lambda(t_now, entry)` and never lies
/// before `entry`.
pub fn visit_update(entry: f64, gamma: f64, t_now: f64, p: &CurveParams) -> Result<f64, EvtmError> {
    let elapsed = (t_now - entry).max(0.0);
    let new_elapsed = equivalent_elapsed(elapsed, gamma, p)?;
    if new_elapsed == elapsed {
        return Ok(entry);
    }
    Ok((t_now - new_elapsed).max(entry))
}

/// Elapsed time since the equivalent visit after a detection with
/// probability `gamma`, given the elapsed time before it.
///
/// Solves `lambda(new) = (1 - gamma) * lambda(elapsed)` in closed form.
pub fn equivalent_elapsed(elapsed: f64, gamma: f64, p: &CurveParams) -> Result<f64, EvtmError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(EvtmError::InvalidGamma(gamma));
    }
    if gamma >= 1.0 {
        return Ok(0.0);
    }
    if elapsed <= 0.0 {
        return Ok(0.0);
    }
    // 1 - lambda_new = gamma + (1 - gamma) * exp(-alpha * (e/T_c)^beta)
    let survive = (-p.alpha * (elapsed / p.t_c).powf(p.beta)).exp();
    let keep = gamma + (1.0 - gamma) * survive;
    let new_elapsed = p.t_c * (-keep.ln() / p.alpha).max(0.0).powf(1.0 / p.beta);
    Ok(new_elapsed.min(elapsed))
}

/// `lambda` as a function of elapsed time alone.
pub fn requirement_after(elapsed: f64, p: &CurveParams) -> f64 {
    -(-p.alpha * (elapsed.max(0.0) / p.t_c).powf(p.beta)).exp_m1()
}

/// `M x N` map of equivalent visiting times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evtm {
    geometry: GridGeometry,
    data: Vec<f64>,
}

/// 3x3 summary of the map around an anchor cell.
///
/// Entry `[r][c]` covers rows below / across / above the anchor for
/// `r = 0 / 1 / 2` and columns left / across / right for `c = 0 / 1 / 2`,
/// matching the neighbour offset `(r - 1, c - 1)` used by the coverage
/// planner. The center is the anchor cell itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressedMap {
    pub values: [[f64; 3]; 3],
    pub anchor: Cell,
}

/// `L x L` window of the map centered on an anchor cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMap {
    pub anchor: Cell,
    pub size: usize,
    /// Row-major, `size * size` entries; entry `(a, b)` is cell
    /// `(anchor.0 + a - h, anchor.1 + b - h)` with `h = (size - 1) / 2`.
    pub values: Vec<f64>,
}

impl LocalMap {
    pub fn half(&self) -> usize {
        (self.size - 1) / 2
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size + b]
    }

    pub fn center(&self) -> f64 {
        let h = self.half();
        self.get(h, h)
    }
}

impl Evtm {
    pub fn new(geometry: GridGeometry, t0: f64) -> Self {
        Self {
            data: vec![t0; geometry.len()],
            geometry,
        }
    }

    pub fn from_values(geometry: GridGeometry, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), geometry.len());
        Self { geometry, data }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: Cell) -> f64 {
        self.data[self.geometry.index(c)]
    }

    pub fn set(&mut self, c: Cell, t: f64) {
        let i = self.geometry.index(c);
        self.data[i] = t;
    }

    /// Mean of `t_now - entry` over all cells.
    pub fn mean_elapsed(&self, t_now: f64) -> f64 {
        self.data.iter().map(|&t| t_now - t).sum::<f64>() / self.data.len() as f64
    }

    /// Credits every cell inside the sensing disk centered at `pos`.
    pub fn observe(&mut self, pos: (f64, f64), sensor: &SensorParams, t_now: f64, curve: &CurveParams) {
        let geometry = self.geometry;
        let data = &mut self.data;
        geometry.for_each_in_disk(pos.0, pos.1, sensor.r_o, |c, d| {
            let gamma = detection_probability(d, sensor).expect("cell inside disk");
            let i = geometry.index(c);
            data[i] = visit_update(data[i], gamma, t_now, curve).expect("gamma in (0, 1]");
        });
    }

    /// Block-average compression around `anchor`. Empty blocks (anchor on
    /// the border) report `t_now`.
    pub fn compress(&self, anchor: Cell, t_now: f64) -> CompressedMap {
        let (rows, cols) = (self.geometry.rows, self.geometry.cols);
        let (mi, ni) = anchor;
        // summed-area table with a zero border
        let w = cols + 1;
        let mut sat = vec![0.0; (rows + 1) * w];
        for m in 0..rows {
            let mut row = 0.0;
            for n in 0..cols {
                row += self.data[m * cols + n];
                sat[(m + 1) * w + n + 1] = sat[m * w + n + 1] + row;
            }
        }
        let block = |m0: usize, m1: usize, n0: usize, n1: usize| -> f64 {
            if m1 <= m0 || n1 <= n0 {
                return t_now;
            }
            let s = sat[m1 * w + n1] - sat[m0 * w + n1] - sat[m1 * w + n0] + sat[m0 * w + n0];
            s / ((m1 - m0) * (n1 - n0)) as f64
        };
        let m_ranges = [(0, mi), (0, rows), (mi + 1, rows)];
        let n_ranges = [(0, ni), (0, cols), (ni + 1, cols)];
        let mut values = [[0.0; 3]; 3];
        for (r, &(m0, m1)) in m_ranges.iter().enumerate() {
            for (c, &(n0, n1)) in n_ranges.iter().enumerate() {
                values[r][c] = block(m0, m1, n0, n1);
            }
        }
        values[1][1] = self.get(anchor);
        CompressedMap { values, anchor }
    }

    /// The `size x size` window centered at `anchor`; cells outside the grid
    /// are filled with `t_now`.
    pub fn extract(&self, anchor: Cell, size: usize, t_now: f64) -> LocalMap {
        assert!(size % 2 == 1, "window size must be odd");
        let h = ((size - 1) / 2) as i64;
        let mut values = Vec::with_capacity(size * size);
        for a in 0..size as i64 {
            let m = anchor.0 as i64 + a - h;
            for b in 0..size as i64 {
                let n = anchor.1 as i64 + b - h;
                values.push(if self.geometry.contains_signed(m, n) {
                    self.data[m as usize * self.geometry.cols + n as usize]
                } else {
                    t_now
                });
            }
        }
        LocalMap { anchor, size, values }
    }

    /// Cellwise max with an incoming window, clipped to the grid.
    pub fn merge_max(&mut self, incoming: &LocalMap) {
        let h = incoming.half() as i64;
        let cols = self.geometry.cols;
        for a in 0..incoming.size {
            let m = incoming.anchor.0 as i64 + a as i64 - h;
            if m < 0 || m as usize >= self.geometry.rows {
                continue;
            }
            for b in 0..incoming.size {
                let n = incoming.anchor.1 as i64 + b as i64 - h;
                if n < 0 || n as usize >= cols {
                    continue;
                }
                let i = m as usize * cols + n as usize;
                let v = incoming.values[a * incoming.size + b];
                if v > self.data[i] {
                    self.data[i] = v;
                }
            }
        }
    }

    /// Cellwise max with a whole map of the same geometry.
    pub fn merge_map(&mut self, other: &Evtm) {
        debug_assert_eq!(self.geometry, other.geometry);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            if b > *a {
                *a = b;
            }
        }
    }
}
