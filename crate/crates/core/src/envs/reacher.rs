//! A planar two-link reacher with exact rotational symmetry.
//!
//! The target sits at the origin; the shoulder is pinned to a circle of
//! radius `circle_radius` around it. The observable state is the 6-D vector
//! of target-centred Euclidean coordinates of shoulder, elbow, and hand.
//! Internally the simulation tracks joint angles, so the rigid-link
//! invariants hold exactly and rotating a context rotates whole trajectories.
//!
//! Dynamics are kinematic: torque sets joint angular acceleration with
//! linear damping, integrated with semi-implicit Euler. Joint angles are
//! measured relative to rotation-invariant axes, which makes the dynamics
//! commute with rotations by construction.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::rollout::{Environment, StepResult};

/// Timeout used in the shaping-reward denominator.
pub const REWARD_HORIZON: f64 = 200.0;

/// 6-D observable state: (x_s, y_s, x_e, y_e, x_h, y_h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReacherState(pub [f64; 6]);

impl ReacherState {
    pub fn shoulder(&self) -> (f64, f64) {
        (self.0[0], self.0[1])
    }
    pub fn elbow(&self) -> (f64, f64) {
        (self.0[2], self.0[3])
    }
    pub fn hand(&self) -> (f64, f64) {
        (self.0[4], self.0[5])
    }
    pub fn hand_distance(&self) -> f64 {
        let (x, y) = self.hand();
        (x * x + y * y).sqrt()
    }
}

/// Per-episode parameters: where the shoulder sits on the circle and the
/// initial arm pose. Joint angles are relative to rotation-invariant axes
/// (shoulder joint w.r.t. the shoulder-to-target axis, elbow joint w.r.t.
/// the upper arm), so rotating a context only changes `shoulder_angle`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReacherContext {
    pub shoulder_angle: f64,
    pub shoulder_joint0: f64,
    pub elbow_joint0: f64,
}

impl ReacherContext {
    /// The fixed default pose: shoulder joint 45 degrees counter-clockwise
    /// of the shoulder-to-target axis, elbow 90 degrees clockwise of the
    /// upper arm.
    pub fn default_pose(shoulder_angle: f64) -> Self {
        ReacherContext { shoulder_angle, shoulder_joint0: PI / 4.0, elbow_joint0: -PI / 2.0 }
    }

    /// The same pose placed at a rotated shoulder location.
    pub fn rotated(&self, by: f64) -> Self {
        ReacherContext { shoulder_angle: self.shoulder_angle + by, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReacherDynamics {
    pub l1: f64,
    pub l2: f64,
    pub circle_radius: f64,
    pub torque_limit: f64,
    pub dt: f64,
    pub damping: f64,
    pub max_steps: usize,
    pub goal_radius: f64,
}

impl Default for ReacherDynamics {
    fn default() -> Self {
        ReacherDynamics {
            l1: 0.5,
            l2: 0.5,
            circle_radius: 1.0,
            torque_limit: 2.0,
            dt: 0.05,
            damping: 1.0,
            max_steps: 200,
            goal_radius: 0.05,
        }
    }
}

/// Full simulation state: joint configuration plus episode bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReacherSim {
    /// Absolute orientation of the upper arm.
    pub theta1: f64,
    /// Elbow angle relative to the upper arm.
    pub theta2: f64,
    pub omega: [f64; 2],
    pub steps: usize,
    /// Best hand-to-target distance achieved so far this episode.
    pub d_min: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ReacherEnv {
    pub dynamics: ReacherDynamics,
}

impl ReacherEnv {
    pub fn new(dynamics: ReacherDynamics) -> Self {
        ReacherEnv { dynamics }
    }

    pub fn coords(&self, ctx: &ReacherContext, sim: &ReacherSim) -> ReacherState {
        let d = &self.dynamics;
        let (sx, sy) = (
            d.circle_radius * ctx.shoulder_angle.cos(),
            d.circle_radius * ctx.shoulder_angle.sin(),
        );
        let (ex, ey) = (sx + d.l1 * sim.theta1.cos(), sy + d.l1 * sim.theta1.sin());
        let a2 = sim.theta1 + sim.theta2;
        let (hx, hy) = (ex + d.l2 * a2.cos(), ey + d.l2 * a2.sin());
        ReacherState([sx, sy, ex, ey, hx, hy])
    }
}

/// Ratcheted shaping reward: 1 at the goal, otherwise
/// `(1 - 0.5 d) / (0.5 T)` only when the episode's best distance improves.
pub fn reacher_reward(d_target: f64, d_min: f64, at_goal: bool) -> f64 {
    if at_goal {
        1.0
    } else if d_target < d_min {
        (1.0 - 0.5 * d_target) / (0.5 * REWARD_HORIZON)
    } else {
        0.0
    }
}

impl Environment for ReacherEnv {
    type Ctx = ReacherContext;
    type State = ReacherSim;
    type Action = [f64; 2];

    fn reset(&self, ctx: &ReacherContext) -> ReacherSim {
        // shoulder-to-target axis points from the shoulder to the origin
        let theta1 = ctx.shoulder_angle + PI + ctx.shoulder_joint0;
        let sim = ReacherSim { theta1, theta2: ctx.elbow_joint0, omega: [0.0, 0.0], steps: 0, d_min: 0.0 };
        let d0 = self.coords(ctx, &sim).hand_distance();
        ReacherSim { d_min: d0, ..sim }
    }

    fn step(&self, ctx: &ReacherContext, s: &ReacherSim, a: &[f64; 2]) -> StepResult<ReacherSim> {
        let d = &self.dynamics;
        let mut next = *s;
        for i in 0..2 {
            let torque = a[i].clamp(-d.torque_limit, d.torque_limit);
            next.omega[i] += d.dt * (torque - d.damping * next.omega[i]);
        }
        next.theta1 += d.dt * next.omega[0];
        next.theta2 += d.dt * next.omega[1];
        next.steps += 1;

        let dist = self.coords(ctx, &next).hand_distance();
        let at_goal = dist <= d.goal_radius;
        let reward = reacher_reward(dist, s.d_min, at_goal);
        next.d_min = s.d_min.min(dist);
        StepResult {
            next,
            reward,
            terminated: at_goal,
            truncated: !at_goal && next.steps >= d.max_steps,
        }
    }
}
