//! SO(2), its finite cyclic subgroups, the 6-D reacher-state representation,
//! the subgroup discrepancy measure, and full data augmentation.
//!
//! The state representation is block-diagonal: three identical 2x2 rotation
//! blocks acting on the (shoulder, elbow, hand) coordinate pairs. Because the
//! blocks are identical, the operator norm of a representation difference
//! reduces to that of a single block, `2 |sin((a - b) / 2)|`.

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const TAU: f64 = 2.0 * std::f64::consts::PI;
const ANGLE_EPS: f64 = 1e-12;

/// A rotation angle canonicalised to [0, 2pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    angle: f64,
}

impl GroupElement {
    pub fn new(angle: f64) -> Self {
        let mut a = angle % TAU;
        if a < 0.0 {
            a += TAU;
        }
        if (a - TAU).abs() < ANGLE_EPS {
            a = 0.0;
        }
        GroupElement { angle: a }
    }

    pub fn identity() -> Self {
        GroupElement { angle: 0.0 }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement::new(self.angle + other.angle)
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement::new(-self.angle)
    }
}

/// The cyclic subgroup C_k of SO(2); k = 1 is the trivial subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicSubgroup {
    pub k: usize,
}

impl CyclicSubgroup {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("cyclic subgroup order must be >= 1".into()));
        }
        Ok(CyclicSubgroup { k })
    }

    pub fn elements(&self) -> Vec<GroupElement> {
        (0..self.k).map(|j| GroupElement::new(TAU * j as f64 / self.k as f64)).collect()
    }
}

/// The 6x6 block-diagonal state representation: three 2x2 rotation blocks.
pub fn rep_matrix(g: &GroupElement) -> Matrix6<f64> {
    let (s, c) = g.angle.sin_cos();
    let mut m = Matrix6::zeros();
    for block in 0..3 {
        let i = 2 * block;
        m[(i, i)] = c;
        m[(i, i + 1)] = -s;
        m[(i + 1, i)] = s;
        m[(i + 1, i + 1)] = c;
    }
    m
}

/// Applies the rotation to a 6-D reacher state (pairs rotated in place).
pub fn apply(g: &GroupElement, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != 6 {
        return Err(Error::Contract(format!("expected a 6-D reacher state, got {}", s.len())));
    }
    let (sn, cs) = g.angle.sin_cos();
    let mut out = vec![0.0; 6];
    for block in 0..3 {
        let i = 2 * block;
        out[i] = cs * s[i] - sn * s[i + 1];
        out[i + 1] = sn * s[i] + cs * s[i + 1];
    }
    Ok(out)
}

/// Operator norm of `rep(a) - rep(b)`; for identical rotation blocks this is
/// `2 |sin((a - b) / 2)|`.
pub fn opnorm_diff(a: &GroupElement, b: &GroupElement) -> f64 {
    2.0 * ((a.angle - b.angle) / 2.0).sin().abs()
}

/// The discrepancy between SO(2) and C_k: max over g of the distance to the
/// nearest subgroup element. The worst g sits midway between adjacent
/// subgroup angles, giving `2 sin(pi / (2k))`.
pub fn kappa(b: &CyclicSubgroup) -> f64 {
    2.0 * (std::f64::consts::PI / (2.0 * b.k as f64)).sin()
}

/// Brute-force oracle for `kappa`: grid over g at the given angular
/// resolution, operator norms taken from an SVD of the actual 6x6
/// difference matrix.
pub fn kappa_grid_search(b: &CyclicSubgroup, resolution: f64) -> f64 {
    let reps: Vec<Matrix6<f64>> = b.elements().iter().map(rep_matrix).collect();
    let steps = (TAU / resolution).ceil() as usize;
    let mut worst = 0.0f64;
    for i in 0..steps {
        let g = GroupElement::new(i as f64 * resolution);
        let rg = rep_matrix(&g);
        let nearest = reps
            .iter()
            .map(|rb| {
                let diff = rg - rb;
                diff.svd(false, false).singular_values[0]
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    worst
}

/// Full data augmentation: every sample is replicated under every subgroup
/// element, labels unchanged. Output order is sample-major, subgroup
/// elements in ascending angle.
pub fn augment(data: &Dataset, b: &CyclicSubgroup) -> Result<Dataset> {
    let elements = b.elements();
    let mut samples = Vec::with_capacity(data.samples.len() * b.k);
    for sample in &data.samples {
        if sample.state.len() != 6 {
            return Err(Error::Contract("augment requires 6-D reacher states".into()));
        }
        for e in &elements {
            let mut s = sample.clone();
            s.state = apply(e, &sample.state)?;
            samples.push(s);
        }
    }
    let mut out = data.clone();
    out.samples = samples;
    Ok(out)
}

/// Checks the permutation property of an augmented set: applying `b` to any
/// state lands on another state in the set (within 1e-9) carrying the same
/// target.
pub fn permutation_check(aug: &Dataset, b: &GroupElement) -> Result<bool> {
    for sample in &aug.samples {
        let rotated = apply(b, &sample.state)?;
        let mut found = false;
        for other in &aug.samples {
            let close = rotated
                .iter()
                .zip(&other.state)
                .all(|(x, y)| (x - y).abs() <= 1e-9);
            if close && sample.target == other.target {
                found = true;
                break;
            }
        }
        if !found {
            return Ok(false);
        }
    }
    Ok(true)
}
