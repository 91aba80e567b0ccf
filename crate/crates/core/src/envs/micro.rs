//! A one-dimensional Lipschitz MDP on [-1, 1] with known constants
//! L_T = L_R = 1, used to exercise the suboptimality bound end to end.

use super::rollout::{Environment, StepResult};

pub const MICRO_HORIZON: usize = 30;
pub const MICRO_L_T: f64 = 1.0;
pub const MICRO_L_R: f64 = 1.0;

/// s' = clamp(s + 0.5a, -1, 1), R(s, a) = 1 - |s|. Never terminates; the
/// rollout horizon is [`MICRO_HORIZON`].
pub fn micro_mdp_step(s: f64, a: f64) -> StepResult<f64> {
    let a = a.clamp(-1.0, 1.0);
    StepResult {
        next: (s + 0.5 * a).clamp(-1.0, 1.0),
        reward: 1.0 - s.abs(),
        terminated: false,
        truncated: false,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MicroEnv;

impl Environment for MicroEnv {
    type Ctx = f64; // the initial state
    type State = f64;
    type Action = f64;

    fn reset(&self, ctx: &f64) -> f64 {
        ctx.clamp(-1.0, 1.0)
    }

    fn step(&self, _ctx: &f64, s: &f64, a: &f64) -> StepResult<f64> {
        micro_mdp_step(*s, *a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_examples() {
        let r = micro_mdp_step(0.0, 0.0);
        assert_eq!(r.next, 0.0);
        assert_eq!(r.reward, 1.0);
        let r = micro_mdp_step(0.9, 1.0);
        assert_eq!(r.next, 1.0); // clamped from 1.4
        assert!((r.reward - 0.1).abs() < 1e-15);
        let r = micro_mdp_step(-1.0, -1.0);
        assert_eq!(r.next, -1.0);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn empirical_lipschitz_ratios_within_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut max_t: f64 = 0.0;
        let mut max_r: f64 = 0.0;
        for _ in 0..100_000 {
            let s1: f64 = rng.gen_range(-1.0..1.0);
            let s2: f64 = rng.gen_range(-1.0..1.0);
            let a: f64 = rng.gen_range(-1.0..1.0);
            if (s1 - s2).abs() < 1e-12 {
                continue;
            }
            let t1 = micro_mdp_step(s1, a);
            let t2 = micro_mdp_step(s2, a);
            max_t = max_t.max((t1.next - t2.next).abs() / (s1 - s2).abs());
            max_r = max_r.max((t1.reward - t2.reward).abs() / (s1 - s2).abs());
        }
        assert!(max_t <= MICRO_L_T + 1e-9, "transition ratio {max_t}");
        assert!(max_r <= MICRO_L_R + 1e-9, "reward ratio {max_r}");
    }
}
