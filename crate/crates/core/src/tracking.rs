//! Fisher-information tracking rewards and receding-horizon planning.
//!
//! The reward of flying a command sequence is the sum, over the horizon, of
//! the determinant of the position Fisher information matrix of a
//! range-bearing measurement of the predicted target. For that observation
//! model `det(G) = 1 / (sigma_r^2 * sigma_theta^2 * r^2)`.

use nalgebra::{Matrix2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::cv_transition;
use crate::sensing::SensorParams;
use crate::world::{step_uav, KinematicLimits, UavCommand, UavState};

/// Ranges below this are treated as this value when scoring; the
/// information of a co-located sensor is capped rather than infinite.
pub const MIN_RANGE: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("UAV and target positions coincide")]
    SingularGeometry,
}

/// Discrete set of candidate commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub actions: Vec<UavCommand>,
}

impl ActionSet {
    /// `dv_levels x omega_levels` grid of evenly spaced commands spanning
    /// the actuator limits. Both level counts must be odd so the zero
    /// command is included.
    pub fn grid(limits: &KinematicLimits, dv_levels: usize, omega_levels: usize) -> Self {
        assert!(dv_levels % 2 == 1 && omega_levels % 2 == 1, "level counts must be odd");
        let levels = |k: usize, max: f64| -> Vec<f64> {
            if k == 1 {
                return vec![0.0];
            }
            let h = (k - 1) as f64 / 2.0;
            (0..k).map(|i| max * (i as f64 - h) / h).collect()
        };
        let mut actions = Vec::with_capacity(dv_levels * omega_levels);
        for dv in levels(dv_levels, limits.dv_max) {
            for om in levels(omega_levels, limits.omega_max) {
                actions.push(UavCommand::new(dv, om));
            }
        }
        Self { actions }
    }

    pub fn standard(limits: &KinematicLimits) -> Self {
        Self::grid(limits, 3, 5)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPlan {
    pub actions: Vec<UavCommand>,
    pub reward: f64,
}

impl HorizonPlan {
    /// The command executed this step.
    pub fn first(&self) -> UavCommand {
        self.actions.first().copied().unwrap_or(UavCommand::ZERO)
    }
}

/// Position FIM `H^T R^-1 H` of a range-bearing measurement.
pub fn fim(uav_pos: (f64, f64), target_pos: (f64, f64), sensor: &SensorParams) -> Result<Matrix2<f64>, TrackingError> {
    let dx = target_pos.0 - uav_pos.0;
    let dy = target_pos.1 - uav_pos.1;
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return Err(TrackingError::SingularGeometry);
    }
    let r = r2.sqrt();
    let h = Matrix2::new(dx / r, dy / r, -dy / r2, dx / r2);
    let r_inv = Matrix2::new(1.0 / sensor.sigma_r.powi(2), 0.0, 0.0, 1.0 / sensor.sigma_theta.powi(2));
    Ok(h.transpose() * r_inv * h)
}

/// Closed-form determinant of the position FIM at `range`.
pub fn fim_det(range: f64, sensor: &SensorParams) -> f64 {
    let r = range.max(MIN_RANGE);
    1.0 / (sensor.sigma_r * sensor.sigma_r * sensor.sigma_theta * sensor.sigma_theta * r * r)
}

/// Reward density at one predicted step; zero outside the sensing disk.
fn step_reward(uav: &UavState, target: (f64, f64), sensor: &SensorParams) -> (f64, f64) {
    let range = (target.0 - uav.x).hypot(target.1 - uav.y);
    let reward = if range <= sensor.r_o { fim_det(range, sensor) } else { 0.0 };
    (reward, range)
}

/// Shared inputs of the horizon search.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub dt: f64,
    pub limits: &'a KinematicLimits,
    pub sensor: &'a SensorParams,
}

/// Predicted target positions for steps `1..=horizon`.
fn predict_positions(target: &Vector4<f64>, horizon: usize, dt: f64) -> Vec<(f64, f64)> {
    let f = cv_transition(dt);
    let mut s = *target;
    (0..horizon)
        .map(|_| {
            s = f * s;
            (s[0], s[2])
        })
        .collect()
}

/// Sum of FIM determinants along `plan`, with the target propagated by the
/// noiseless constant-velocity model.
pub fn horizon_reward(uav: &UavState, target: &Vector4<f64>, plan: &[UavCommand], ctx: PlanContext<'_>) -> f64 {
    let targets = predict_positions(target, plan.len(), ctx.dt);
    let mut u = *uav;
    let mut total = 0.0;
    for (cmd, tp) in plan.iter().zip(targets) {
        u = step_uav(&u, cmd.clamped(ctx.limits), ctx.dt, ctx.limits);
        total += step_reward(&u, tp, ctx.sensor).0;
    }
    total
}

/// Ranking key of a candidate: reward, then the reward one further step
/// with a zero command, then the range after that coast step.
///
/// Position integrates with the pre-step heading, so a turn only shows up
/// in the reward one step later; the coast term lets the planner see it.
#[derive(Debug, Clone, Copy)]
struct Score {
    reward: f64,
    coast_reward: f64,
    coast_range: f64,
}

impl Score {
    fn beats(&self, other: &Score) -> bool {
        if self.reward != other.reward {
            return self.reward > other.reward;
        }
        if self.coast_reward != other.coast_reward {
            return self.coast_reward > other.coast_reward;
        }
        self.coast_range < other.coast_range
    }
}

fn coast(u: &UavState, target: (f64, f64), ctx: PlanContext<'_>) -> (f64, f64) {
    let next = step_uav(u, UavCommand::ZERO, ctx.dt, ctx.limits);
    step_reward(&next, target, ctx.sensor)
}

/// Greedy receding-horizon plan: at each depth pick the action with the
/// largest next-step determinant.
///
/// Ties (turns at the first depth, targets out of view) are broken by a
/// one-step zero-command lookahead, then by the lowest action index.
pub fn plan_tracking(
    uav: &UavState,
    target: &Vector4<f64>,
    actions: &ActionSet,
    horizon: usize,
    ctx: PlanContext<'_>,
) -> HorizonPlan {
    assert!(horizon >= 1, "horizon must be at least one step");
    let targets = predict_positions(target, horizon + 1, ctx.dt);
    let mut u = *uav;
    let mut chosen = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for k in 0..horizon {
        let mut best: Option<(Score, UavCommand, UavState)> = None;
        for &a in &actions.actions {
            let next = step_uav(&u, a.clamped(ctx.limits), ctx.dt, ctx.limits);
            let (reward, _) = step_reward(&next, targets[k], ctx.sensor);
            let (coast_reward, coast_range) = coast(&next, targets[k + 1], ctx);
            let score = Score { reward, coast_reward, coast_range };
            if best.as_ref().is_none_or(|(b, _, _)| score.beats(b)) {
                best = Some((score, a, next));
            }
        }
        let (score, a, next) = best.expect("non-empty action set");
        chosen.push(a);
        total += score.reward;
        u = next;
    }
    HorizonPlan { actions: chosen, reward: total }
}

/// Exhaustive search over all `|actions|^horizon` sequences, ranked like
/// the greedy planner with the coast lookahead taken after the last step.
pub fn plan_tracking_exhaustive(
    uav: &UavState,
    target: &Vector4<f64>,
    actions: &ActionSet,
    horizon: usize,
    ctx: PlanContext<'_>,
) -> HorizonPlan {
    assert!(horizon >= 1, "horizon must be at least one step");
    let targets = predict_positions(target, horizon + 1, ctx.dt);
    let mut best: Option<(Score, Vec<UavCommand>)> = None;
    let mut seq = Vec::with_capacity(horizon);
    struct Search<'s, 'c> {
        targets: &'s [(f64, f64)],
        actions: &'s ActionSet,
        ctx: PlanContext<'c>,
        horizon: usize,
    }
    fn rec(
        s: &Search<'_, '_>,
        u: UavState,
        acc: f64,
        seq: &mut Vec<UavCommand>,
        best: &mut Option<(Score, Vec<UavCommand>)>,
    ) {
        let depth = seq.len();
        if depth == s.horizon {
            let (coast_reward, coast_range) = coast(&u, s.targets[depth], s.ctx);
            let score = Score { reward: acc, coast_reward, coast_range };
            if best.as_ref().is_none_or(|(b, _)| score.beats(b)) {
                *best = Some((score, seq.clone()));
            }
            return;
        }
        for &a in &s.actions.actions {
            let next = step_uav(&u, a.clamped(s.ctx.limits), s.ctx.dt, s.ctx.limits);
            let (r, _) = step_reward(&next, s.targets[depth], s.ctx.sensor);
            seq.push(a);
            rec(s, next, acc + r, seq, best);
            seq.pop();
        }
    }
    let search = Search { targets: &targets, actions, ctx, horizon };
    rec(&search, *uav, 0.0, &mut seq, &mut best);
    let (score, actions) = best.expect("non-empty action set");
    HorizonPlan { actions, reward: score.reward }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ctx<'a>(limits: &'a KinematicLimits, sensor: &'a SensorParams) -> PlanContext<'a> {
        PlanContext { dt: 1.0, limits, sensor }
    }

    #[test]
    fn det_closed_form_value() {
        let s = SensorParams::default();
        assert!((fim_det(100.0, &s) - 1.6e-3).abs() < 1e-15);
        let g = fim((0.0, 0.0), (60.0, 80.0), &s).unwrap();
        assert!((g.determinant() - 1.6e-3).abs() < 1e-12);
    }

    #[test]
    fn det_rotation_invariant_and_inverse_square() {
        let s = SensorParams::default();
        let base = fim((0.0, 0.0), (100.0, 0.0), &s).unwrap().determinant();
        for k in 0..12 {
            let a = k as f64 * PI / 6.0;
            let d = fim((5.0, -3.0), (5.0 + 100.0 * a.cos(), -3.0 + 100.0 * a.sin()), &s).unwrap().determinant();
            assert!((d - base).abs() / base < 1e-9);
        }
        assert!((fim_det(50.0, &s) / fim_det(100.0, &s) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_positions_are_singular() {
        assert_eq!(fim((1.0, 1.0), (1.0, 1.0), &SensorParams::default()), Err(TrackingError::SingularGeometry));
    }

    #[test]
    fn standard_action_set() {
        let lim = KinematicLimits::default();
        let a = ActionSet::standard(&lim);
        assert_eq!(a.len(), 15);
        assert!(a.actions.contains(&UavCommand::ZERO));
        assert!(a.actions.iter().all(|c| c.within(&lim)));
    }

    #[test]
    fn single_step_reward_matches_fim() {
        let (lim, s) = (KinematicLimits::default(), SensorParams::default());
        let u = UavState { id: 0, x: 0.0, y: 0.0, v: 20.0, eta: 0.0, h: 100.0 };
        let target = Vector4::new(100.0, 0.0, 50.0, 0.0);
        let r = horizon_reward(&u, &target, &[UavCommand::ZERO], ctx(&lim, &s));
        let g = fim((20.0, 0.0), (100.0, 50.0), &s).unwrap();
        assert!((r - g.determinant()).abs() / r < 1e-9);
    }

    #[test]
    fn out_of_view_scores_zero() {
        let (lim, s) = (KinematicLimits::default(), SensorParams::default());
        let u = UavState { id: 0, x: 0.0, y: 0.0, v: 20.0, eta: 0.0, h: 100.0 };
        let target = Vector4::new(5000.0, 0.0, 0.0, 0.0);
        assert_eq!(horizon_reward(&u, &target, &[UavCommand::ZERO; 3], ctx(&lim, &s)), 0.0);
    }

    #[test]
    fn reward_is_additive_over_the_horizon() {
        let (lim, s) = (KinematicLimits::default(), SensorParams::default());
        let u = UavState { id: 0, x: 0.0, y: 0.0, v: 20.0, eta: 0.3, h: 100.0 };
        let target = Vector4::new(80.0, 2.0, 40.0, -1.0);
        let plan = [UavCommand::new(1.0, 0.2), UavCommand::new(-2.0, 0.1)];
        let both = horizon_reward(&u, &target, &plan, ctx(&lim, &s));
        let first = horizon_reward(&u, &target, &plan[..1], ctx(&lim, &s));
        let u1 = step_uav(&u, plan[0], 1.0, &lim);
        let t1 = cv_transition(1.0) * target;
        let second = horizon_reward(&u1, &t1, &plan[1..], ctx(&lim, &s));
        assert!((both - first - second).abs() < 1e-15);
    }

    #[test]
    fn turns_towards_distant_target() {
        let (lim, s) = (KinematicLimits::default(), SensorParams::default());
        let actions = ActionSet {
            actions: vec![
                UavCommand::new(0.0, lim.omega_max),
                UavCommand::ZERO,
                UavCommand::new(0.0, -lim.omega_max),
            ],
        };
        let u = UavState { id: 0, x: 0.0, y: 0.0, v: 20.0, eta: 0.0, h: 100.0 };
        let target = Vector4::new(0.0, 0.0, 2000.0, 0.0);
        let plan = plan_tracking(&u, &target, &actions, 3, ctx(&lim, &s));
        assert_eq!(plan.first(), UavCommand::new(0.0, lim.omega_max));
        assert_eq!(plan.actions.len(), 3);
    }

    #[test]
    fn greedy_equals_exhaustive_at_depth_one() {
        let (lim, s) = (KinematicLimits::default(), SensorParams::default());
        let actions = ActionSet::standard(&lim);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let u = UavState { id: 0, x: 0.0, y: 0.0, v: rng.random_range(15.0..40.0), eta: rng.random_range(-PI..PI), h: 100.0 };
            let target = Vector4::new(rng.random_range(-300.0..300.0), rng.random_range(-10.0..10.0), rng.random_range(-300.0..300.0), rng.random_range(-10.0..10.0));
            let g = plan_tracking(&u, &target, &actions, 1, ctx(&lim, &s));
            let e = plan_tracking_exhaustive(&u, &target, &actions, 1, ctx(&lim, &s));
            assert_eq!(g, e);
        }
    }

    #[test]
    fn greedy_close_to_exhaustive_at_depth_two() {
        let (lim, s) = (KinematicLimits::default(), SensorParams::default());
        let actions = ActionSet::grid(&lim, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        for _ in 0..100 {
            let u = UavState { id: 0, x: 0.0, y: 0.0, v: rng.random_range(15.0..40.0), eta: rng.random_range(-PI..PI), h: 100.0 };
            let (r, b) = (rng.random_range(1.0..s.r_o), rng.random_range(-PI..PI));
            let target = Vector4::new(r * b.cos(), rng.random_range(-10.0..10.0), r * b.sin(), rng.random_range(-10.0..10.0));
            let g = plan_tracking(&u, &target, &actions, 2, ctx(&lim, &s));
            let e = plan_tracking_exhaustive(&u, &target, &actions, 2, ctx(&lim, &s));
            assert!(g.reward <= e.reward * (1.0 + 1e-12));
            assert!((horizon_reward(&u, &target, &g.actions, ctx(&lim, &s)) - g.reward).abs() <= 1e-12 * g.reward.max(1e-300));
            if e.reward > 0.0 {
                assert!(g.reward >= 0.9 * e.reward, "greedy {} exhaustive {}", g.reward, e.reward);
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn noise_scaling_preserves_argmax() {
        let lim = KinematicLimits::default();
        let s = SensorParams::default();
        let s2 = SensorParams { sigma_r: 2.0 * s.sigma_r, sigma_theta: 2.0 * s.sigma_theta, ..s };
        let actions = ActionSet::standard(&lim);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let u = UavState { id: 0, x: 0.0, y: 0.0, v: 20.0, eta: rng.random_range(-PI..PI), h: 100.0 };
            let target = Vector4::new(rng.random_range(-250.0..250.0), 0.0, rng.random_range(-250.0..250.0), 0.0);
            let a = plan_tracking(&u, &target, &actions, 3, ctx(&lim, &s));
            let b = plan_tracking(&u, &target, &actions, 3, ctx(&lim, &s2));
            assert_eq!(a.actions, b.actions);
            assert_eq!(b.reward, a.reward / 16.0);
        }
    }

    #[test]
    fn extending_horizon_never_lowers_reward() {
        let (lim, s) = (KinematicLimits::default(), SensorParams::default());
        let u = UavState { id: 0, x: 0.0, y: 0.0, v: 20.0, eta: 0.0, h: 100.0 };
        let target = Vector4::new(100.0, 1.0, 100.0, 0.0);
        let plan = [UavCommand::ZERO, UavCommand::new(0.0, 0.3), UavCommand::new(1.0, 0.3), UavCommand::ZERO];
        let mut prev = 0.0;
        for h in 1..=plan.len() {
            let r = horizon_reward(&u, &target, &plan[..h], ctx(&lim, &s));
            assert!(r >= prev && r >= 0.0);
            prev = r;
        }
    }
}
