//! Distillation and behaviour-cloning losses, plus the student training loop.
//!
//! Four loss kinds are supported:
//! - `MseScalar` / `MseVector`: squared L2 between raw outputs and target
//!   actions, averaged over the batch.
//! - `ProbRegression`: squared L2 between the student's softmax head and the
//!   teacher's probability vector.
//! - `KlEntropy`: KL(student || teacher) plus `entropy_weight * H(student)`.
//! - `BcLog`: negative log-likelihood of the actions actually taken.
//!
//! Probability-head losses floor probabilities at 1e-8 inside logarithms.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, Architecture, Optimizer, Params};

pub const PROB_FLOOR: f64 = 1e-8;

/// A supervised target: a teacher action vector, a teacher probability
/// vector, or the index of the action actually taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    ActionIndex(usize),
    Vector(Vec<f64>),
    Probs(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    MseScalar,
    MseVector,
    ProbRegression,
    KlEntropy,
    BcLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Entropy regularisation weight; only read for `KlEntropy`.
    pub entropy_weight: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec { kind, entropy_weight: 0.0 }
    }

    pub fn kl(entropy_weight: f64) -> Self {
        LossSpec { kind: LossKind::KlEntropy, entropy_weight }
    }

    /// Whether the network's raw output is pushed through a softmax head.
    pub fn uses_softmax_head(&self) -> bool {
        matches!(self.kind, LossKind::ProbRegression | LossKind::KlEntropy | LossKind::BcLog)
    }

    pub fn matches_target(&self, t: &Target) -> bool {
        match (self.kind, t) {
            (LossKind::MseScalar | LossKind::MseVector, Target::Vector(_)) => true,
            (LossKind::ProbRegression | LossKind::KlEntropy, Target::Probs(_)) => true,
            (LossKind::BcLog, Target::ActionIndex(_)) => true,
            _ => false,
        }
    }

    /// Per-sample loss and its gradient w.r.t. the raw network output `z`.
    pub fn value_and_output_grad(&self, z: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
        match (self.kind, target) {
            (LossKind::MseScalar | LossKind::MseVector, Target::Vector(y)) => {
                if y.len() != z.len() {
                    return Err(Error::Contract("target dimension mismatch".into()));
                }
                let loss: f64 = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                let g = z.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect();
                Ok((loss, g))
            }
            (LossKind::ProbRegression, Target::Probs(q)) => {
                check_simplex(q)?;
                let p = softmax(z);
                let loss: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                let gp: Vec<f64> = p.iter().zip(q).map(|(a, b)| 2.0 * (a - b)).collect();
                Ok((loss, softmax_backward(&p, &gp)))
            }
            (LossKind::KlEntropy, Target::Probs(q)) => {
                check_simplex(q)?;
                let p = softmax(z);
                let lam = self.entropy_weight;
                let mut loss = 0.0;
                let mut gp = vec![0.0; p.len()];
                for i in 0..p.len() {
                    let lp = p[i].max(PROB_FLOOR).ln();
                    let lq = q[i].max(PROB_FLOOR).ln();
                    // KL(p||q) + lam * H(p) = (1-lam) * sum p ln p - sum p ln q
                    loss += (1.0 - lam) * p[i] * lp - p[i] * lq;
                    gp[i] = (1.0 - lam) * (lp + 1.0) - lq;
                }
                Ok((loss, softmax_backward(&p, &gp)))
            }
            (LossKind::BcLog, Target::ActionIndex(a)) => {
                if *a >= z.len() {
                    return Err(Error::Contract(format!("action index {a} out of range")));
                }
                let p = softmax(z);
                let loss = -p[*a].max(PROB_FLOOR).ln();
                let mut g = p;
                g[*a] -= 1.0;
                Ok((loss, g))
            }
            _ => Err(Error::Contract("loss kind does not match target kind".into())),
        }
    }
}

fn check_simplex(q: &[f64]) -> Result<()> {
    let s: f64 = q.iter().sum();
    if (s - 1.0).abs() > 1e-9 || q.iter().any(|&v| v < 0.0) {
        return Err(Error::Contract(format!("target is not a probability vector (sum {s})")));
    }
    Ok(())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / s).collect()
}

/// Pulls a gradient w.r.t. probabilities back through the softmax:
/// `dL/dz_k = p_k (g_k - sum_j p_j g_j)`.
fn softmax_backward(p: &[f64], gp: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum();
    p.iter().zip(gp).map(|(a, b)| a * (b - dot)).collect()
}

/// Mean squared L2 distance between output and target action vectors.
pub fn loss_mse(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::Contract("empty or mismatched batch".into()));
    }
    let mut acc = 0.0;
    for (o, t) in outputs.iter().zip(targets) {
        if o.len() != t.len() {
            return Err(Error::Contract("dimension mismatch".into()));
        }
        acc += o.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(acc / outputs.len() as f64)
}

/// Mean squared L2 distance between probability vectors.
pub fn loss_prob(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    for t in targets {
        check_simplex(t)?;
    }
    loss_mse(outputs, targets)
}

/// Mean KL(student || teacher) plus `lambda * H(student)` per sample.
pub fn loss_kl(outputs: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<f64> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::Contract("empty or mismatched batch".into()));
    }
    let mut acc = 0.0;
    for (p, q) in outputs.iter().zip(targets) {
        check_simplex(q)?;
        for i in 0..p.len() {
            let pi = p[i].max(PROB_FLOOR);
            let qi = q[i].max(PROB_FLOOR);
            acc += p[i] * (pi.ln() - qi.ln()) - lambda * p[i] * pi.ln();
        }
    }
    Ok(acc / outputs.len() as f64)
}

/// Summed negative log-likelihood of the taken actions.
pub fn loss_bc(outputs: &[Vec<f64>], actions: &[usize]) -> Result<f64> {
    if outputs.len() != actions.len() {
        return Err(Error::Contract("mismatched batch".into()));
    }
    let mut acc = 0.0;
    for (p, &a) in outputs.iter().zip(actions) {
        if a >= p.len() {
            return Err(Error::Contract(format!("action index {a} out of range")));
        }
        acc -= p[a].max(PROB_FLOOR).ln();
    }
    Ok(acc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.lr <= 0.0 {
            return Err(Error::Config("epochs, batch size, and lr must be positive".into()));
        }
        Ok(())
    }

    /// Reacher distillation defaults.
    pub fn reacher_default() -> Self {
        TrainConfig { epochs: 500, batch_size: 6, lr: 1e-4, optimizer: Optimizer::Adam, shuffle_seed: 0 }
    }

    /// Four Rooms behaviour-cloning defaults for the teacher dataset.
    pub fn grid_bc_default() -> Self {
        TrainConfig { epochs: 1, batch_size: 64, lr: 1e-3, optimizer: Optimizer::Adam, shuffle_seed: 0 }
    }
}

/// Result of training one student: final parameters and the per-epoch
/// mean training loss.
#[derive(Debug, Clone)]
pub struct TrainedStudent {
    pub params: Params,
    pub loss_curve: Vec<f64>,
}

/// Trains a freshly initialised student on the dataset with shuffled
/// mini-batch gradient descent. Deterministic in (data, seed, cfg).
pub fn train_student(
    data: &Dataset,
    arch: &Architecture,
    loss: &LossSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedStudent> {
    cfg.validate()?;
    if data.samples.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    for s in &data.samples {
        if !loss.matches_target(&s.target) {
            return Err(Error::Contract("loss kind does not match dataset target kind".into()));
        }
    }
    let mut params = nn::init(arch, seed)?;
    let mut opt_state = nn::OptState::new(&params);
    let mut shuffle_rng =
        ChaCha8Rng::seed_from_u64(cfg.shuffle_seed ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(Vec<f64>, Target)> = chunk
                .iter()
                .map(|&i| (data.samples[i].state.clone(), data.samples[i].target.clone()))
                .collect();
            let g = nn::grad(&params, &batch, loss)?;
            if !g.loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {bi}"
                )));
            }
            epoch_loss += g.loss;
            batches += 1;
            let (next, st) = nn::step(&params, &g, cfg.optimizer, cfg.lr, opt_state)?;
            params = next;
            opt_state = st;
        }
        curve.push(epoch_loss / batches as f64);
    }
    Ok(TrainedStudent { params, loss_curve: curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetKind, Sample, SampleSource};

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]]).unwrap(), 0.0);
        // single sample (0,0) vs (3,4): ||.||^2 = 25
        assert_eq!(loss_mse(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap(), 25.0);
        // scaling all residuals by c scales the loss by c^2
        let base = loss_mse(&[vec![1.0, -2.0]], &[vec![0.0, 0.0]]).unwrap();
        let scaled = loss_mse(&[vec![3.0, -6.0]], &[vec![0.0, 0.0]]).unwrap();
        assert!((scaled - 9.0 * base).abs() < 1e-12);
    }

    #[test]
    fn prob_examples() {
        assert_eq!(
            loss_prob(&[vec![0.2, 0.3, 0.5]], &[vec![0.2, 0.3, 0.5]]).unwrap(),
            0.0
        );
        assert_eq!(
            loss_prob(&[vec![1.0, 0.0, 0.0]], &[vec![0.0, 1.0, 0.0]]).unwrap(),
            2.0
        );
        assert!(loss_prob(&[vec![0.5, 0.5]], &[vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn prob_loss_bounded_by_two_on_simplices() {
        // brute force over random simplex pairs; the max ||p-q||^2 over
        // simplices is 2, attained at opposite vertices
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let mut max_seen = 0.0f64;
        for _ in 0..2000 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                let raw: Vec<f64> = (0..3).map(|_| rand::Rng::gen_range(rng, 0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            };
            let p = draw(&mut rng);
            let q = draw(&mut rng);
            let l = loss_prob(&[p], &[q]).unwrap();
            assert!(l <= 2.0 + 1e-12);
            max_seen = max_seen.max(l);
        }
        // vertices achieve exactly 2
        assert_eq!(loss_prob(&[vec![0.0, 1.0, 0.0]], &[vec![1.0, 0.0, 0.0]]).unwrap(), 2.0);
        assert!(max_seen < 2.0);
    }

    #[test]
    fn kl_examples() {
        let p = vec![0.5, 0.5];
        assert!(loss_kl(&[p.clone()], &[p.clone()], 0.0).unwrap().abs() < 1e-12);
        // KL((.5,.5) || (.25,.75)) = .5 ln 2 + .5 ln(2/3)
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        let got = loss_kl(&[vec![0.5, 0.5]], &[vec![0.25, 0.75]], 0.0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((expected - 0.14384).abs() < 1e-4);
        // lambda > 0 adds lambda * H(p); uniform over 3 has H = ln 3
        let u = vec![1.0 / 3.0; 3];
        let with = loss_kl(&[u.clone()], &[u.clone()], 0.7).unwrap();
        assert!((with - 0.7 * 3.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn bc_examples() {
        assert_eq!(loss_bc(&[vec![1.0, 0.0]], &[0]).unwrap(), 0.0);
        let l = loss_bc(&[vec![0.5, 0.5]], &[1]).unwrap();
        assert!((l - 2.0f64.ln()).abs() < 1e-12);
        // monotone: smaller probability on the taken action, larger loss
        let l_small = loss_bc(&[vec![0.9, 0.1]], &[1]).unwrap();
        assert!(l_small > l);
        // sum over the batch, not mean
        let l2 = loss_bc(&[vec![0.5, 0.5], vec![0.5, 0.5]], &[0, 1]).unwrap();
        assert!((l2 - 2.0 * 2.0f64.ln()).abs() < 1e-12);
    }

    fn tiny_dataset() -> Dataset {
        Dataset {
            kind: DatasetKind::TrainingContexts,
            env_id: "test".into(),
            metadata: serde_json::json!({}),
            samples: vec![Sample {
                state: vec![0.5, -0.5],
                target: Target::Vector(vec![0.3, 0.7]),
                source: SampleSource::Teacher,
            }],
        }
    }

    #[test]
    fn single_sample_interpolates() {
        let data = tiny_dataset();
        let arch = Architecture::new(2, vec![16], 2);
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 1,
            lr: 1e-2,
            optimizer: Optimizer::Adam,
            shuffle_seed: 0,
        };
        let out = train_student(&data, &arch, &LossSpec::new(LossKind::MseVector), &cfg, 3).unwrap();
        assert!(*out.loss_curve.last().unwrap() < 1e-6, "final loss {}", out.loss_curve.last().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset();
        let arch = Architecture::new(2, vec![8], 2);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 1,
            lr: 1e-3,
            optimizer: Optimizer::Sgd,
            shuffle_seed: 5,
        };
        let a = train_student(&data, &arch, &LossSpec::new(LossKind::MseVector), &cfg, 3).unwrap();
        let b = train_student(&data, &arch, &LossSpec::new(LossKind::MseVector), &cfg, 3).unwrap();
        assert_eq!(a.params, b.params);
        let c = train_student(&data, &arch, &LossSpec::new(LossKind::MseVector), &cfg, 4).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn loss_target_mismatch_is_rejected() {
        let data = tiny_dataset();
        let arch = Architecture::new(2, vec![8], 2);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            lr: 1e-3,
            optimizer: Optimizer::Sgd,
            shuffle_seed: 0,
        };
        assert!(train_student(&data, &arch, &LossSpec::new(LossKind::BcLog), &cfg, 0).is_err());
    }
}
