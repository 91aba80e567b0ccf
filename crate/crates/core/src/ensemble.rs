//! Ensemble construction, averaged prediction, deterministic evaluation,
//! and aggregation of results across seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distill::{softmax, LossSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{self, Architecture, Params};

/// How member outputs are combined into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSemantics {
    ActionVector,
    ProbabilityVector,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<Params>,
    pub arch: Architecture,
    pub semantics: OutputSemantics,
}

impl Ensemble {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Coordinate-wise mean of the member outputs. For probability
    /// semantics each member's raw output goes through the softmax head
    /// before averaging.
    pub fn mean_output(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.arch.output_dim];
        for m in &self.members {
            let out = nn::forward(m, state)?;
            let out = match self.semantics {
                OutputSemantics::ActionVector => out,
                OutputSemantics::ProbabilityVector => softmax(&out),
            };
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        let n = self.members.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Mean probabilities, then argmax; ties resolve to the lowest index.
    pub fn predict_action_index(&self, state: &[f64]) -> Result<usize> {
        let p = self.mean_output(state)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Trains N students independently on the identical dataset; members differ
/// only in their init/shuffle seed. Training runs in parallel, the member
/// order follows the seed order.
pub fn build_ensemble(
    data: &Dataset,
    arch: &Architecture,
    loss: &LossSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
    semantics: OutputSemantics,
) -> Result<Ensemble> {
    if seeds.is_empty() {
        return Err(Error::Config("ensemble needs at least one seed".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Config("ensemble seeds must be distinct".into()));
    }
    let members = seeds
        .par_iter()
        .map(|&seed| {
            crate::distill::train_student(data, arch, loss, cfg, seed)
                .map(|t| t.params)
                .map_err(|e| Error::Contract(format!("training member seed {seed} failed: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { members, arch: arch.clone(), semantics })
}

/// Per-context returns plus aggregate statistics for one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_context: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub discounted: bool,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var.sqrt())
}

/// Evaluates a policy over contexts: `run(ctx, episode)` returns one
/// episode's return; the report holds per-context means over episodes.
pub fn evaluate<C>(
    contexts: &[C],
    episodes_per_context: usize,
    discounted: bool,
    mut run: impl FnMut(&C, usize) -> Result<f64>,
) -> Result<EvalReport> {
    if contexts.is_empty() || episodes_per_context == 0 {
        return Err(Error::Config("evaluation needs contexts and episodes".into()));
    }
    let mut per_context = Vec::with_capacity(contexts.len());
    for ctx in contexts {
        let mut acc = 0.0;
        for ep in 0..episodes_per_context {
            acc += run(ctx, ep)?;
        }
        per_context.push(acc / episodes_per_context as f64);
    }
    report_from_returns(per_context, discounted)
}

/// Builds an [`EvalReport`] from per-context mean returns.
pub fn report_from_returns(per_context: Vec<f64>, discounted: bool) -> Result<EvalReport> {
    if per_context.is_empty() {
        return Err(Error::Config("evaluation needs at least one context".into()));
    }
    let (mean, std) = mean_std(&per_context);
    Ok(EvalReport { per_context, mean, std, discounted })
}

/// Seed-aggregated table row: mean, std, and normal-approximation 95% CI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
    pub seeds: usize,
}

pub fn aggregate(report_means: &[f64]) -> Result<AggregateRow> {
    if report_means.len() < 2 {
        return Err(Error::Config("aggregation needs at least 2 seeds".into()));
    }
    let (mean, std) = mean_std(report_means);
    let ci95 = 1.96 * std / (report_means.len() as f64).sqrt();
    Ok(AggregateRow { mean, std, ci95, seeds: report_means.len() })
}
