//! Teacher and exploration policies: an open-loop handcrafted reacher
//! controller, a PD controller tracking the inverse-kinematics solution, a
//! BFS planner for the grid world, and uniform-random explorers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::envs::fourrooms::{
    Dir, FourRoomsContext, FourRoomsEnv, GridAction, GridState, GRID_ACTIONS,
};
use crate::envs::reacher::{ReacherContext, ReacherDynamics, ReacherEnv, ReacherSim};
use crate::envs::rollout::{Environment, Policy};
use crate::error::{Error, Result};

/// Open-loop policy for the fixed-pose setting: full counter-torque on the
/// shoulder for the first 12 steps, then full torque, elbow always at +2.
pub fn handcrafted_reacher(t: usize) -> [f64; 2] {
    if t < 12 {
        [-2.0, 2.0]
    } else {
        [2.0, 2.0]
    }
}

/// Wraps a [`handcrafted_reacher`] into a reacher policy.
pub struct HandcraftedReacher;

impl Policy<ReacherEnv> for HandcraftedReacher {
    fn act(
        &self,
        _env: &ReacherEnv,
        _ctx: &ReacherContext,
        s: &ReacherSim,
        _rng: &mut ChaCha8Rng,
    ) -> [f64; 2] {
        handcrafted_reacher(s.steps)
    }
}

/// PD controller tracking the inverse-kinematics joint solution that puts
/// the hand on the target. Joint errors are rotation-invariant, so the
/// induced state-space policy is rotation-equivariant by construction.
#[derive(Debug, Clone, Copy)]
pub struct IkReacher {
    dynamics: ReacherDynamics,
    pub kp: f64,
    pub kd: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

impl IkReacher {
    pub fn new(dynamics: ReacherDynamics) -> Result<Self> {
        if dynamics.circle_radius > dynamics.l1 + dynamics.l2 + 1e-12 {
            return Err(Error::Contract(format!(
                "target unreachable: shoulder distance {} exceeds arm length {}",
                dynamics.circle_radius,
                dynamics.l1 + dynamics.l2
            )));
        }
        Ok(IkReacher { dynamics, kp: 4.0, kd: 3.0 })
    }

    /// Elbow-up IK solution in our joint parametrization (theta1 absolute,
    /// theta2 relative to the upper arm).
    pub fn target_joints(&self, ctx: &ReacherContext) -> (f64, f64) {
        let d = &self.dynamics;
        let r = d.circle_radius;
        let cos_t2 = ((r * r - d.l1 * d.l1 - d.l2 * d.l2) / (2.0 * d.l1 * d.l2)).clamp(-1.0, 1.0);
        let t2 = cos_t2.acos();
        // the shoulder-to-target direction has absolute angle shoulder_angle + pi
        let t1 = ctx.shoulder_angle + PI - (d.l2 * t2.sin()).atan2(d.l1 + d.l2 * t2.cos());
        (t1, t2)
    }

    pub fn torque(&self, ctx: &ReacherContext, s: &ReacherSim) -> [f64; 2] {
        let (t1, t2) = self.target_joints(ctx);
        let lim = self.dynamics.torque_limit;
        [
            (self.kp * wrap_angle(t1 - s.theta1) - self.kd * s.omega[0]).clamp(-lim, lim),
            (self.kp * wrap_angle(t2 - s.theta2) - self.kd * s.omega[1]).clamp(-lim, lim),
        ]
    }
}

impl Policy<ReacherEnv> for IkReacher {
    fn act(
        &self,
        _env: &ReacherEnv,
        ctx: &ReacherContext,
        s: &ReacherSim,
        _rng: &mut ChaCha8Rng,
    ) -> [f64; 2] {
        self.torque(ctx, s)
    }
}

/// Tabular planner over (cell, direction) with unit costs for turns and
/// moves. Action probabilities are softmax(-distance-after-action / T);
/// temperature 0 degenerates to the deterministic optimal action.
#[derive(Debug, Clone)]
pub struct GridPlanner {
    size: usize,
    /// dist[row][col][dir]: minimal steps to reach the goal cell.
    dist: Vec<f64>,
    pub temperature: f64,
}

impl GridPlanner {
    pub fn new(ctx: &FourRoomsContext, temperature: f64) -> Result<Self> {
        if temperature < 0.0 {
            return Err(Error::Config("planner temperature must be >= 0".into()));
        }
        let n = ctx.size;
        let idx = |c: usize, r: usize, d: usize| (r * n + c) * 4 + d;
        let mut dist = vec![f64::INFINITY; n * n * 4];
        let mut q = VecDeque::new();
        for d in 0..4 {
            dist[idx(ctx.goal.0, ctx.goal.1, d)] = 0.0;
            q.push_back((ctx.goal.0, ctx.goal.1, d));
        }
        // backward BFS: relax every one-step predecessor of the popped state
        while let Some((c, r, d)) = q.pop_front() {
            let here = dist[idx(c, r, d)];
            let dir = Dir::from_index(d);
            let mut preds = vec![(c, r, dir.left().index()), (c, r, dir.right().index())];
            let (dc, dr) = dir.offset();
            let pc = c as isize - dc;
            let pr = r as isize - dr;
            if pc >= 0 && pr >= 0 && (pc as usize) < n && (pr as usize) < n {
                let (pc, pr) = (pc as usize, pr as usize);
                if !ctx.is_wall(pc, pr) {
                    preds.push((pc, pr, d));
                }
            }
            for (pc, pr, pd) in preds {
                let i = idx(pc, pr, pd);
                if dist[i].is_infinite() {
                    dist[i] = here + 1.0;
                    q.push_back((pc, pr, pd));
                }
            }
        }
        let start = idx(ctx.start.0, ctx.start.1, ctx.start.2.index());
        if dist[start].is_infinite() {
            return Err(Error::Contract("context is unsolvable: goal unreachable from start".into()));
        }
        Ok(GridPlanner { size: n, dist, temperature })
    }

    pub fn distance(&self, s: &GridState) -> f64 {
        self.dist[(s.row * self.size + s.col) * 4 + s.dir.index()]
    }

    /// Action probabilities at a state, ordered (left, right, forward).
    pub fn probs(&self, ctx: &FourRoomsContext, s: &GridState) -> [f64; 3] {
        let env = FourRoomsEnv::default();
        let after: Vec<f64> = GRID_ACTIONS
            .iter()
            .map(|a| {
                let next = env.step(ctx, s, a).next;
                if (next.col, next.row) == ctx.goal {
                    0.0
                } else {
                    self.distance(&next)
                }
            })
            .collect();
        let best = after.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.temperature == 0.0 {
            let mut p = [0.0; 3];
            p[after.iter().position(|&d| d == best).unwrap()] = 1.0;
            return p;
        }
        let w: Vec<f64> = after.iter().map(|d| (-(d - best) / self.temperature).exp()).collect();
        let z: f64 = w.iter().sum();
        [w[0] / z, w[1] / z, w[2] / z]
    }

    pub fn sample(&self, probs: &[f64; 3], rng: &mut ChaCha8Rng) -> GridAction {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, &p) in GRID_ACTIONS.iter().zip(probs) {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        GridAction::Forward
    }
}

impl Policy<FourRoomsEnv> for GridPlanner {
    fn act(
        &self,
        _env: &FourRoomsEnv,
        ctx: &FourRoomsContext,
        s: &GridState,
        rng: &mut ChaCha8Rng,
    ) -> GridAction {
        self.sample(&self.probs(ctx, s), rng)
    }
}

/// Uniform-random action policies for the explorer role.
pub struct PureExplorer {
    pub torque_limit: f64,
}

impl Default for PureExplorer {
    fn default() -> Self {
        PureExplorer { torque_limit: 2.0 }
    }
}

impl Policy<FourRoomsEnv> for PureExplorer {
    fn act(
        &self,
        _env: &FourRoomsEnv,
        _ctx: &FourRoomsContext,
        _s: &GridState,
        rng: &mut ChaCha8Rng,
    ) -> GridAction {
        GRID_ACTIONS[rng.gen_range(0..3)]
    }
}

impl Policy<ReacherEnv> for PureExplorer {
    fn act(
        &self,
        _env: &ReacherEnv,
        _ctx: &ReacherContext,
        _s: &ReacherSim,
        rng: &mut ChaCha8Rng,
    ) -> [f64; 2] {
        let l = self.torque_limit;
        [rng.gen_range(-l..l), rng.gen_range(-l..l)]
    }
}
