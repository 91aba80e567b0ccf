//! Generic episode rollout with discounted and undiscounted returns.

use rand_chacha::ChaCha8Rng;

/// Outcome of a single environment transition.
#[derive(Debug, Clone)]
pub struct StepResult<S> {
    pub next: S,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// A value-type environment: `step` is a pure function of (context, state,
/// action); any episode bookkeeping (step counters, best-distance trackers)
/// lives inside the state.
pub trait Environment {
    type Ctx;
    type State: Clone;
    type Action: Clone;

    fn reset(&self, ctx: &Self::Ctx) -> Self::State;
    fn step(&self, ctx: &Self::Ctx, s: &Self::State, a: &Self::Action) -> StepResult<Self::State>;
}

pub trait Policy<E: Environment> {
    fn act(&self, env: &E, ctx: &E::Ctx, s: &E::State, rng: &mut ChaCha8Rng) -> E::Action;
}

impl<E: Environment, F> Policy<E> for F
where
    F: Fn(&E, &E::Ctx, &E::State, &mut ChaCha8Rng) -> E::Action,
{
    fn act(&self, env: &E, ctx: &E::Ctx, s: &E::State, rng: &mut ChaCha8Rng) -> E::Action {
        self(env, ctx, s, rng)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<S, A> {
    pub states: Vec<S>,
    pub actions: Vec<A>,
    pub rewards: Vec<f64>,
    pub undiscounted_return: f64,
    pub discounted_return: f64,
}

/// Rolls one episode. Deterministic given (ctx, policy, rng state).
pub fn rollout<E: Environment, P: Policy<E>>(
    env: &E,
    ctx: &E::Ctx,
    policy: &P,
    gamma: f64,
    rng: &mut ChaCha8Rng,
    max_steps: usize,
) -> Trajectory<E::State, E::Action> {
    let mut state = env.reset(ctx);
    let mut states = vec![state.clone()];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut undiscounted = 0.0;
    let mut discounted = 0.0;
    let mut disc = 1.0;
    for _ in 0..max_steps {
        let a = policy.act(env, ctx, &state, rng);
        let r = env.step(ctx, &state, &a);
        actions.push(a);
        rewards.push(r.reward);
        undiscounted += r.reward;
        discounted += disc * r.reward;
        disc *= gamma;
        state = r.next;
        states.push(state.clone());
        if r.terminated || r.truncated {
            break;
        }
    }
    Trajectory { states, actions, rewards, undiscounted_return: undiscounted, discounted_return: discounted }
}
