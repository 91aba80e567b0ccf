//! Construction and persistence of the five distillation datasets.
//!
//! Reacher datasets store 6-D Euclidean states with teacher torque targets.
//! Grid datasets store flattened one-hot encodings with either the teacher's
//! action probabilities (distillation) or the index of the action actually
//! taken (behaviour cloning).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::distill::Target;
use crate::envs::fourrooms::{FourRoomsContext, FourRoomsEnv, GridAction, GRID_ACTIONS};
use crate::envs::reacher::{ReacherContext, ReacherEnv};
use crate::envs::rollout::{Environment, Policy};
use crate::error::{Error, Result};
use crate::teachers::{GridPlanner, PureExplorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    TrainingContexts,
    PlusCk,
    PlusRandom,
    Teacher,
    ExploreGo,
    Mixed,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::TrainingContexts => "training_contexts",
            DatasetKind::PlusCk => "plus_ck",
            DatasetKind::PlusRandom => "plus_random",
            DatasetKind::Teacher => "teacher",
            DatasetKind::ExploreGo => "explore_go",
            DatasetKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleSource {
    Teacher,
    Explorer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub target: Target,
    pub source: SampleSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub env_id: String,
    pub metadata: serde_json::Value,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Target flavour for grid datasets: distillation regresses the teacher's
/// probability vector, behaviour cloning predicts the taken action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridTargetKind {
    Distill,
    Bc,
}

fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (episode as u64).wrapping_mul(0xd129_0d3b_07e1_a4a5))
}

// ---------------------------------------------------------------- reacher

/// Rolls whole teacher trajectories round-robin over the contexts until the
/// sample budget is met, then truncates to exactly `target_size`.
pub fn reacher_training_contexts<P: Policy<ReacherEnv>>(
    env: &ReacherEnv,
    teacher: &P,
    contexts: &[ReacherContext],
    target_size: usize,
    seed: u64,
) -> Result<Dataset> {
    let samples = reacher_collect(env, teacher, contexts, target_size, seed)?;
    Ok(Dataset {
        kind: DatasetKind::TrainingContexts,
        env_id: "reacher".into(),
        metadata: serde_json::json!({
            "seed": seed, "target_size": target_size, "n_contexts": contexts.len(),
        }),
        samples,
    })
}

fn reacher_collect<P: Policy<ReacherEnv>>(
    env: &ReacherEnv,
    teacher: &P,
    contexts: &[ReacherContext],
    target_size: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if target_size == 0 {
        return Err(Error::Config("target_size must be >= 1".into()));
    }
    if contexts.is_empty() {
        return Err(Error::Config("need at least one context".into()));
    }
    let mut samples = Vec::with_capacity(target_size);
    let mut episode = 0usize;
    while samples.len() < target_size {
        let ctx = &contexts[episode % contexts.len()];
        let mut rng = episode_rng(seed, episode);
        let mut s = env.reset(ctx);
        loop {
            let a = teacher.act(env, ctx, &s, &mut rng);
            samples.push(Sample {
                state: env.coords(ctx, &s).0.to_vec(),
                target: Target::Vector(a.to_vec()),
                source: SampleSource::Teacher,
            });
            let r = env.step(ctx, &s, &a);
            s = r.next;
            if r.terminated || r.truncated {
                break;
            }
        }
        episode += 1;
    }
    samples.truncate(target_size);
    Ok(samples)
}

/// Additionally re-rolls the teacher from each pose placed at every other
/// C_k shoulder location (fresh rollouts, not rotated copies of stored
/// states).
pub fn reacher_plus_ck<P: Policy<ReacherEnv>>(
    env: &ReacherEnv,
    teacher: &P,
    contexts: &[ReacherContext],
    k: usize,
    target_size: usize,
    seed: u64,
) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::Config("subgroup order k must be >= 1".into()));
    }
    let mut expanded = Vec::with_capacity(contexts.len() * k);
    for ctx in contexts {
        for j in 0..k {
            expanded.push(ctx.rotated(TAU * j as f64 / k as f64));
        }
    }
    let samples = reacher_collect(env, teacher, &expanded, target_size, seed)?;
    Ok(Dataset {
        kind: DatasetKind::PlusCk,
        env_id: "reacher".into(),
        metadata: serde_json::json!({
            "seed": seed, "target_size": target_size, "subgroup_k": k,
            "n_contexts": contexts.len(), "n_start_states": expanded.len(),
        }),
        samples,
    })
}

/// Volume-matched control: the training contexts plus `n_extra` brand-new
/// poses with all angles uniform on [0, 2pi).
pub fn reacher_plus_random<P: Policy<ReacherEnv>>(
    env: &ReacherEnv,
    teacher: &P,
    contexts: &[ReacherContext],
    n_extra: usize,
    target_size: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut expanded = contexts.to_vec();
    for _ in 0..n_extra {
        expanded.push(ReacherContext {
            shoulder_angle: rng.gen_range(0.0..TAU),
            shoulder_joint0: rng.gen_range(0.0..TAU),
            elbow_joint0: rng.gen_range(0.0..TAU),
        });
    }
    let samples = reacher_collect(env, teacher, &expanded, target_size, seed)?;
    Ok(Dataset {
        kind: DatasetKind::PlusRandom,
        env_id: "reacher".into(),
        metadata: serde_json::json!({
            "seed": seed, "target_size": target_size, "n_extra": n_extra,
            "n_contexts": contexts.len(),
        }),
        samples,
    })
}

// ------------------------------------------------------------------- grid

fn grid_target(
    planner: &GridPlanner,
    ctx: &FourRoomsContext,
    s: &crate::envs::fourrooms::GridState,
    taken: GridAction,
    kind: GridTargetKind,
) -> Target {
    match kind {
        GridTargetKind::Distill => Target::Probs(planner.probs(ctx, s).to_vec()),
        GridTargetKind::Bc => {
            Target::ActionIndex(GRID_ACTIONS.iter().position(|&a| a == taken).unwrap())
        }
    }
}

/// Teacher rollouts in the training contexts, round-robin, truncated to
/// `target_size` ("Teacher" dataset).
pub fn grid_teacher(
    env: &FourRoomsEnv,
    contexts: &[FourRoomsContext],
    temperature: f64,
    target_kind: GridTargetKind,
    target_size: usize,
    seed: u64,
) -> Result<Dataset> {
    if target_size == 0 {
        return Err(Error::Config("target_size must be >= 1".into()));
    }
    let planners = contexts
        .iter()
        .map(|c| GridPlanner::new(c, temperature))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(target_size);
    let mut episode = 0usize;
    while samples.len() < target_size {
        let i = episode % contexts.len();
        let (ctx, planner) = (&contexts[i], &planners[i]);
        let mut rng = episode_rng(seed, episode);
        let mut s = env.reset(ctx);
        loop {
            let a = planner.sample(&planner.probs(ctx, &s), &mut rng);
            samples.push(Sample {
                state: ctx.encode(&s),
                target: grid_target(planner, ctx, &s, a, target_kind),
                source: SampleSource::Teacher,
            });
            let r = env.step(ctx, &s, &a);
            s = r.next;
            if r.terminated || r.truncated {
                break;
            }
        }
        episode += 1;
    }
    samples.truncate(target_size);
    Ok(Dataset {
        kind: DatasetKind::Teacher,
        env_id: "fourrooms".into(),
        metadata: serde_json::json!({
            "seed": seed, "target_size": target_size, "temperature": temperature,
            "target_kind": target_kind, "n_contexts": contexts.len(),
        }),
        samples,
    })
}

/// Per episode: a uniform-random exploration prefix of length
/// k ~ Uniform{0..K-1}, then the teacher to termination. Only the teacher's
/// states are stored; the exploration burn-in is counted in metadata.
pub fn grid_explore_go(
    env: &FourRoomsEnv,
    contexts: &[FourRoomsContext],
    temperature: f64,
    big_k: usize,
    target_kind: GridTargetKind,
    target_size: usize,
    seed: u64,
) -> Result<Dataset> {
    if big_k == 0 {
        return Err(Error::Config("exploration range K must be >= 1".into()));
    }
    if target_size == 0 {
        return Err(Error::Config("target_size must be >= 1".into()));
    }
    let explorer = PureExplorer::default();
    let planners = contexts
        .iter()
        .map(|c| GridPlanner::new(c, temperature))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(target_size);
    let mut episode = 0usize;
    let mut explore_steps = 0usize;
    let mut episodes_done = 0usize;
    while samples.len() < target_size {
        let i = episode % contexts.len();
        let (ctx, planner) = (&contexts[i], &planners[i]);
        let mut rng = episode_rng(seed, episode);
        let k = rng.gen_range(0..big_k);
        let mut s = env.reset(ctx);
        let mut done = false;
        for _ in 0..k {
            let a = explorer.act(env, ctx, &s, &mut rng);
            let r = env.step(ctx, &s, &a);
            s = r.next;
            if r.terminated || r.truncated {
                done = true;
                break;
            }
        }
        explore_steps += s.steps;
        while !done {
            let a = planner.sample(&planner.probs(ctx, &s), &mut rng);
            samples.push(Sample {
                state: ctx.encode(&s),
                target: grid_target(planner, ctx, &s, a, target_kind),
                source: SampleSource::Teacher,
            });
            let r = env.step(ctx, &s, &a);
            s = r.next;
            done = r.terminated || r.truncated;
        }
        episode += 1;
        episodes_done += 1;
    }
    samples.truncate(target_size);
    Ok(Dataset {
        kind: DatasetKind::ExploreGo,
        env_id: "fourrooms".into(),
        metadata: serde_json::json!({
            "seed": seed, "target_size": target_size, "temperature": temperature,
            "target_kind": target_kind, "K": big_k, "n_contexts": contexts.len(),
            "exploration_steps": explore_steps, "episodes": episodes_done,
        }),
        samples,
    })
}

/// 50/50 mix of teacher rollouts and pure-explorer rollouts. Distillation
/// targets are always the teacher's probabilities at the visited state; BC
/// targets are the actions actually taken, whoever took them.
pub fn grid_mixed(
    env: &FourRoomsEnv,
    contexts: &[FourRoomsContext],
    temperature: f64,
    target_kind: GridTargetKind,
    target_size: usize,
    seed: u64,
) -> Result<Dataset> {
    if target_size == 0 || target_size % 2 != 0 {
        return Err(Error::Config("mixed dataset requires an even target_size >= 2".into()));
    }
    let half = target_size / 2;
    let teacher_half = grid_teacher(env, contexts, temperature, target_kind, half, seed)?;

    let explorer = PureExplorer::default();
    let planners = contexts
        .iter()
        .map(|c| GridPlanner::new(c, temperature))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = teacher_half.samples;
    let mut episode = 0usize;
    while samples.len() < target_size {
        let i = episode % contexts.len();
        let (ctx, planner) = (&contexts[i], &planners[i]);
        // offset the stream so explorer episodes differ from teacher ones
        let mut rng = episode_rng(seed ^ EXPLORER_STREAM, episode);
        let mut s = env.reset(ctx);
        loop {
            let a = explorer.act(env, ctx, &s, &mut rng);
            samples.push(Sample {
                state: ctx.encode(&s),
                target: grid_target(planner, ctx, &s, a, target_kind),
                source: SampleSource::Explorer,
            });
            let r = env.step(ctx, &s, &a);
            s = r.next;
            if r.terminated || r.truncated || samples.len() >= target_size {
                break;
            }
        }
        episode += 1;
    }
    Ok(Dataset {
        kind: DatasetKind::Mixed,
        env_id: "fourrooms".into(),
        metadata: serde_json::json!({
            "seed": seed, "target_size": target_size, "temperature": temperature,
            "target_kind": target_kind, "n_contexts": contexts.len(),
        }),
        samples,
    })
}

const EXPLORER_STREAM: u64 = 0x9d5e_a0f1_7b42_c3d6;

// -------------------------------------------------------------- save/load

#[derive(Serialize, Deserialize)]
struct Header {
    kind: DatasetKind,
    env_id: String,
    target_kind: String,
    metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct SampleWire {
    s: Vec<f64>,
    t: serde_json::Value,
    src: u8,
}

fn target_kind_str(d: &Dataset) -> &'static str {
    match d.samples.first().map(|s| &s.target) {
        Some(Target::Vector(_)) => "vector",
        Some(Target::Probs(_)) => "probs",
        Some(Target::ActionIndex(_)) => "action_index",
        None => "empty",
    }
}

/// Writes a dataset as JSON lines: a metadata header, then one sample per
/// line. Floats survive the round trip bit-exactly.
pub fn save(d: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    let header = Header {
        kind: d.kind,
        env_id: d.env_id.clone(),
        target_kind: target_kind_str(d).into(),
        metadata: d.metadata.clone(),
    };
    serde_json::to_writer(&mut buf, &header)?;
    buf.push(b'\n');
    for sample in &d.samples {
        let wire = SampleWire {
            s: sample.state.clone(),
            t: serde_json::to_value(&sample.target)?,
            src: match sample.source {
                SampleSource::Teacher => 0,
                SampleSource::Explorer => 1,
            },
        };
        serde_json::to_writer(&mut buf, &wire)?;
        buf.push(b'\n');
    }
    crate::report::write_atomic(path, &buf)
}

pub fn load(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty file, expected metadata header".into() })??;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: SampleWire = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        let target: Target = serde_json::from_value(wire.t)
            .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        // untagged arrays always parse as Vector; the header disambiguates
        let target = match (target, header.target_kind.as_str()) {
            (Target::Vector(v), "probs") => Target::Probs(v),
            (t, _) => t,
        };
        let source = match wire.src {
            0 => SampleSource::Teacher,
            1 => SampleSource::Explorer,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("src must be 0 or 1, got {other}"),
                })
            }
        };
        samples.push(Sample { state: wire.s, target, source });
    }
    Ok(Dataset { kind: header.kind, env_id: header.env_id, metadata: header.metadata, samples })
}
