//! Dense feed-forward networks with exact backpropagation.
//!
//! Everything is `f64` and single-threaded; parallelism happens across
//! ensemble members, not inside a network. Weight matrices are row-major
//! `(out_dim, in_dim)`. Hidden layers use ReLU (subgradient 0 at 0), the
//! output head is linear; any probability semantics (softmax) are applied
//! by the loss, not the network.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distill::{LossSpec, Target};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Architecture { input_dim, hidden, output_dim, activation: Activation::Relu }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("zero-width layer in architecture".into()));
        }
        Ok(())
    }

    /// Layer dimensions as (in, out) pairs, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// One dense layer: row-major weights `(out, in)` plus a bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Network parameters. Immutable after construction in normal use;
/// optimizers return fresh values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub arch: Architecture,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

/// Per-layer gradients matching `Params` shapes, plus the batch loss.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub layers: Vec<Layer>,
    pub loss: f64,
}

/// Gaussian fan-in initialization: weights ~ N(0, 1/fan_in), biases 0.
/// Deterministic in (arch, seed).
pub fn init(arch: &Architecture, seed: u64) -> Result<Params> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layer_dims()
        .iter()
        .map(|&(fan_in, fan_out)| {
            let std = (1.0 / fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| std * gaussian(&mut rng)).collect();
            Layer { w, b: vec![0.0; fan_out] }
        })
        .collect();
    Ok(Params { arch: arch.clone(), seed, layers })
}

/// Standard normal via Box-Muller, driven by the given stream.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > 0.0 {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

fn affine(layer: &Layer, input: &[f64], out: &mut [f64]) {
    let fan_in = input.len();
    for (o, y) in out.iter_mut().enumerate() {
        let row = &layer.w[o * fan_in..(o + 1) * fan_in];
        let mut acc = layer.b[o];
        for (wi, xi) in row.iter().zip(input) {
            acc += wi * xi;
        }
        *y = acc;
    }
}

/// Forward pass returning the raw (linear-head) output.
pub fn forward(p: &Params, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.arch.input_dim {
        return Err(Error::Contract(format!(
            "input dimension {} does not match architecture input {}",
            x.len(),
            p.arch.input_dim
        )));
    }
    let mut cur = x.to_vec();
    let last = p.layers.len() - 1;
    for (l, layer) in p.layers.iter().enumerate() {
        let mut next = vec![0.0; layer.b.len()];
        affine(layer, &cur, &mut next);
        if l != last {
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Forward pass keeping post-activation values of every layer, for backprop.
/// `acts[0]` is the input; `acts[last]` is the raw output.
fn forward_cached(p: &Params, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(p.layers.len() + 1);
    acts.push(x.to_vec());
    let last = p.layers.len() - 1;
    for (l, layer) in p.layers.iter().enumerate() {
        let mut next = vec![0.0; layer.b.len()];
        affine(layer, acts.last().unwrap(), &mut next);
        if l != last {
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        acts.push(next);
    }
    acts
}

/// Backpropagates `dloss_dout` through the cached activations, accumulating
/// into `grads` (scaled by `scale`).
fn backprop_into(p: &Params, acts: &[Vec<f64>], dloss_dout: &[f64], scale: f64, grads: &mut [Layer]) {
    let mut delta = dloss_dout.to_vec();
    for l in (0..p.layers.len()).rev() {
        let input = &acts[l];
        let fan_in = input.len();
        let g = &mut grads[l];
        for (o, &d) in delta.iter().enumerate() {
            g.b[o] += scale * d;
            let row = &mut g.w[o * fan_in..(o + 1) * fan_in];
            for (gi, xi) in row.iter_mut().zip(input) {
                *gi += scale * d * xi;
            }
        }
        if l > 0 {
            // propagate through the affine map, then the ReLU of layer l-1
            let mut prev = vec![0.0; fan_in];
            let layer = &p.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.w[o * fan_in..(o + 1) * fan_in];
                for (pi, wi) in prev.iter_mut().zip(row) {
                    *pi += d * wi;
                }
            }
            for (pi, &a) in prev.iter_mut().zip(&acts[l]) {
                if a <= 0.0 {
                    *pi = 0.0;
                }
            }
            delta = prev;
        }
    }
}

fn zero_grads(p: &Params) -> Vec<Layer> {
    p.layers
        .iter()
        .map(|l| Layer { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
        .collect()
}

/// Exact gradient of the mean per-sample loss over the batch.
pub fn grad(p: &Params, batch: &[(Vec<f64>, Target)], loss: &LossSpec) -> Result<GradientBundle> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = zero_grads(p);
    let mut total_loss = 0.0;
    for (idx, (x, target)) in batch.iter().enumerate() {
        let acts = forward_cached(p, x);
        let out = acts.last().unwrap();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite forward pass at sample {idx}")));
        }
        let (l, dldz) = loss.value_and_output_grad(out, target)?;
        total_loss += l;
        backprop_into(p, &acts, &dldz, 1.0 / n, &mut grads);
    }
    Ok(GradientBundle { layers: grads, loss: total_loss / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Adam first/second moments; `t` counts completed steps.
#[derive(Debug, Clone)]
pub struct OptState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: u64,
}

impl OptState {
    pub fn new(p: &Params) -> Self {
        OptState { m: zero_grads(p), v: zero_grads(p), t: 0 }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One optimizer step. SGD: `p' = p - lr * g`. Adam with standard defaults.
pub fn step(
    p: &Params,
    g: &GradientBundle,
    opt: Optimizer,
    lr: f64,
    mut state: OptState,
) -> Result<(Params, OptState)> {
    if lr <= 0.0 {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    if g.layers.len() != p.layers.len()
        || g.layers.iter().zip(&p.layers).any(|(a, b)| a.w.len() != b.w.len() || a.b.len() != b.b.len())
    {
        return Err(Error::Contract("gradient shape does not match params".into()));
    }
    let mut out = p.clone();
    match opt {
        Optimizer::Sgd => {
            for (layer, gl) in out.layers.iter_mut().zip(&g.layers) {
                for (w, gw) in layer.w.iter_mut().zip(&gl.w) {
                    *w -= lr * gw;
                }
                for (b, gb) in layer.b.iter_mut().zip(&gl.b) {
                    *b -= lr * gb;
                }
            }
        }
        Optimizer::Adam => {
            state.t += 1;
            let t = state.t as i32;
            let bc1 = 1.0 - ADAM_BETA1.powi(t);
            let bc2 = 1.0 - ADAM_BETA2.powi(t);
            for l in 0..out.layers.len() {
                adam_update(&mut out.layers[l].w, &g.layers[l].w, &mut state.m[l].w, &mut state.v[l].w, lr, bc1, bc2);
                adam_update(&mut out.layers[l].b, &g.layers[l].b, &mut state.m[l].b, &mut state.v[l].b, lr, bc1, bc2);
            }
        }
    }
    Ok((out, state))
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, bc1: f64, bc2: f64) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
}

/// Gradient of the scalar network output w.r.t. the parameters, one
/// flattened vector per layer (weights then biases). Requires a scalar head.
pub fn per_layer_grads(p: &Params, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    if p.arch.output_dim != 1 {
        return Err(Error::Contract("per_layer_grads requires output_dim = 1".into()));
    }
    let acts = forward_cached(p, x);
    let mut grads = zero_grads(p);
    backprop_into(p, &acts, &[1.0], 1.0, &mut grads);
    Ok(grads
        .into_iter()
        .map(|l| {
            let mut flat = l.w;
            flat.extend_from_slice(&l.b);
            flat
        })
        .collect())
}

/// Full-precision JSON form: `{arch, seed, layers: [{w, b}]}`.
pub fn to_json(p: &Params) -> Result<String> {
    Ok(serde_json::to_string(p)?)
}

pub fn from_json(s: &str) -> Result<Params> {
    Ok(serde_json::from_str(s)?)
}
