//! The three CMDPs (reacher with rotational symmetry, Four Rooms, and a
//! micro Lipschitz MDP) plus a generic rollout engine.

pub mod fourrooms;
pub mod micro;
pub mod reacher;
pub mod rollout;

pub use rollout::{rollout, Environment, Policy, StepResult, Trajectory};
