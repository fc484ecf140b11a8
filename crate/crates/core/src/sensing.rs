//! Disk field-of-view sensing: grid detection probability and noisy
//! range-bearing target measurements.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, GridGeometry};
use crate::world::{wrap_angle, TargetTruth, UavState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("distance {dist} m is outside the sensing radius {r_o} m")]
    OutOfRange { dist: f64, r_o: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub w_p1: f64,
    pub w_p2: f64,
    pub w_p3: f64,
    /// Sensing-disk radius, m.
    pub r_o: f64,
    /// Range noise standard deviation, m.
    pub sigma_r: f64,
    /// Bearing noise standard deviation, rad.
    pub sigma_theta: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            w_p1: 1.0,
            w_p2: 1.2,
            w_p3: 0.8,
            r_o: 250.0,
            sigma_r: 5.0,
            sigma_theta: 0.05,
        }
    }
}

impl SensorParams {
    /// Sensing radius from altitude and full field-of-view angle.
    pub fn radius_from_fov(h: f64, fov: f64) -> f64 {
        h * (fov / 2.0).tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub target_id: usize,
    pub range: f64,
    /// World-frame bearing from UAV to target, `(-pi, pi]`.
    pub bearing: f64,
    pub stamp: u64,
}

/// Probability that a cell at `dist` from the UAV is successfully inspected.
///
/// The distance is normalised by the sensing radius before entering the
/// stretched-exponential curve.
pub fn detection_probability(dist: f64, params: &SensorParams) -> Result<f64, SensingError> {
    if dist > params.r_o || dist.is_nan() {
        return Err(SensingError::OutOfRange { dist, r_o: params.r_o });
    }
    Ok(detection_curve(dist.max(0.0) / params.r_o, params))
}

/// The raw curve `exp(-w_p1 * (d / w_p2)^w_p3)` on a normalised distance.
pub fn detection_curve(d_norm: f64, params: &SensorParams) -> f64 {
    (-params.w_p1 * (d_norm / params.w_p2).powf(params.w_p3)).exp()
}

/// All cells whose centers lie within the sensing disk of `uav`.
pub fn visible_grids(uav: &UavState, geometry: &GridGeometry, params: &SensorParams) -> Vec<Cell> {
    let mut out = Vec::new();
    geometry.for_each_in_disk(uav.x, uav.y, params.r_o, |c, _| out.push(c));
    out
}

/// Noisy range-bearing measurement of `truth`, or `None` outside the disk.
///
/// Two normal draws are consumed only when the target is visible.
pub fn measure<R: Rng + ?Sized>(
    uav: &UavState,
    truth: &TargetTruth,
    stamp: u64,
    params: &SensorParams,
    rng: &mut R,
) -> Option<Measurement> {
    let dx = truth.x - uav.x;
    let dy = truth.y - uav.y;
    let range = dx.hypot(dy);
    if range > params.r_o {
        return None;
    }
    let bearing = dy.atan2(dx);
    let nr = gaussian(params.sigma_r, rng);
    let nb = gaussian(params.sigma_theta, rng);
    Some(Measurement {
        target_id: truth.id,
        range: (range + nr).abs(),
        bearing: wrap_angle(bearing + nb),
        stamp,
    })
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        // keep the stream aligned with the noisy case
        let _: f64 = rng.random();
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn at(x: f64, y: f64) -> UavState {
        UavState { id: 0, x, y, v: 20.0, eta: 0.0, h: 100.0 }
    }

    #[test]
    fn detection_at_zero_is_one() {
        assert_eq!(detection_probability(0.0, &SensorParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn detection_curve_at_scale_parameter() {
        let p = SensorParams::default();
        assert!((detection_curve(1.2, &p) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((detection_curve(1.2, &p) - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn detection_at_disk_edge() {
        let p = SensorParams::default();
        let got = detection_probability(p.r_o, &p).unwrap();
        let expected = (-(1.0f64 / 1.2).powf(0.8)).exp();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.42135).abs() < 1e-5);
    }

    #[test]
    fn detection_out_of_range_is_error() {
        let p = SensorParams::default();
        assert!(detection_probability(p.r_o + 1.0, &p).is_err());
    }

    #[test]
    fn detection_strictly_decreasing() {
        let p = SensorParams::default();
        let mut prev = 2.0;
        for i in 0..=1000 {
            let d = p.r_o * i as f64 / 1000.0;
            let v = detection_probability(d, &p).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn tiny_disk_sees_single_cell() {
        let g = GridGeometry::new(10, 10, 20.0, (0.0, 0.0));
        let p = SensorParams { r_o: 5.0, ..Default::default() };
        assert_eq!(visible_grids(&at(50.0, 70.0), &g, &p), vec![(3, 2)]);
    }

    #[test]
    fn corner_quarter_disk() {
        let g = GridGeometry::new(20, 20, 10.0, (0.0, 0.0));
        let p = SensorParams { r_o: 60.0, ..Default::default() };
        let got = visible_grids(&at(0.0, 0.0), &g, &p).len();
        let mut expected = 0;
        for m in 0..20 {
            for n in 0..20 {
                let (cx, cy) = ((n as f64 + 0.5) * 10.0, (m as f64 + 0.5) * 10.0);
                if cx.hypot(cy) <= 60.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn measure_outside_disk_is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = TargetTruth { id: 1, x: 300.0, xdot: 0.0, y: 0.0, ydot: 0.0 };
        assert!(measure(&at(0.0, 0.0), &t, 0, &SensorParams::default(), &mut rng).is_none());
    }

    #[test]
    fn noiseless_measurement_due_east() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = SensorParams { sigma_r: 0.0, sigma_theta: 0.0, ..Default::default() };
        let t = TargetTruth { id: 1, x: 100.0, xdot: 0.0, y: 0.0, ydot: 0.0 };
        let z = measure(&at(0.0, 0.0), &t, 3, &p, &mut rng).unwrap();
        assert_eq!((z.range, z.bearing, z.stamp), (100.0, 0.0, 3));
    }

    #[test]
    fn range_noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = SensorParams::default();
        let t = TargetTruth { id: 1, x: 120.0, xdot: 0.0, y: 50.0, ydot: 0.0 };
        let truth_r = 130.0;
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| measure(&at(0.0, 0.0), &t, 0, &p, &mut rng).unwrap().range - truth_r)
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - p.sigma_r).abs() / p.sigma_r < 0.05);
    }

    #[test]
    fn bearing_wraps_near_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = SensorParams { sigma_theta: 0.5, ..Default::default() };
        let t = TargetTruth { id: 1, x: -100.0, xdot: 0.0, y: 1e-9, ydot: 0.0 };
        for _ in 0..2000 {
            let z = measure(&at(0.0, 0.0), &t, 0, &p, &mut rng).unwrap();
            assert!(z.bearing.abs() <= PI);
        }
    }

    #[test]
    fn fov_radius() {
        let fov = 2.0 * (250.0f64 / 100.0).atan();
        assert!((SensorParams::radius_from_fov(100.0, fov) - 250.0).abs() < 1e-9);
    }
}
