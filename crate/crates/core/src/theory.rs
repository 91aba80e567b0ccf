//! Numerical theory toolbox: empirical NTK/NNGP kernels, the closed-form
//! infinite-width ensemble mean and variance, invariance-deviation
//! measurement, the Monte-Carlo tail bound with its Lambert-W inversion,
//! and assembly of the generalisation and suboptimality bounds.
//!
//! The kernel dynamics use the convergent convention
//! `T_t = I - exp(-eta * Theta * t)`; the literature writes the exponent
//! with either sign, only this one converges.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::envs::rollout::{Environment, Policy};
use crate::error::{Error, Result};
use crate::nn::{self, Architecture};

pub const RIDGE: f64 = 1e-10;

/// Empirical kernels on a point set, estimated from `m` random inits.
#[derive(Debug, Clone)]
pub struct KernelMatrices {
    pub theta: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub points: Vec<Vec<f64>>,
    pub m: usize,
}

/// Monte-Carlo NTK: (1/M) sum over inits of sum_l <df/dtheta_l(x), df/dtheta_l(x')>.
/// Scalar-head architectures only.
pub fn empirical_ntk(
    arch: &Architecture,
    points: &[Vec<f64>],
    m: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::Config("kernel estimation needs m >= 1".into()));
    }
    let n = points.len();
    let per_init: Vec<DMatrix<f64>> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<DMatrix<f64>> {
            let p = nn::init(arch, seed.wrapping_add(i as u64))?;
            let grads: Vec<Vec<Vec<f64>>> =
                points.iter().map(|x| nn::per_layer_grads(&p, x)).collect::<Result<_>>()?;
            let mut theta = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let v: f64 = grads[a]
                        .iter()
                        .zip(&grads[b])
                        .map(|(ga, gb)| ga.iter().zip(gb).map(|(x, y)| x * y).sum::<f64>())
                        .sum();
                    theta[(a, b)] = v;
                    theta[(b, a)] = v;
                }
            }
            Ok(theta)
        })
        .collect::<Result<_>>()?;
    let mut acc = DMatrix::zeros(n, n);
    for t in &per_init {
        acc += t;
    }
    Ok(acc / m as f64)
}

/// Monte-Carlo NNGP kernel: E over inits of f(x) f(x').
pub fn empirical_nngp(
    arch: &Architecture,
    points: &[Vec<f64>],
    m: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::Config("kernel estimation needs m >= 1".into()));
    }
    let n = points.len();
    let per_init: Vec<DMatrix<f64>> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<DMatrix<f64>> {
            let p = nn::init(arch, seed.wrapping_add(i as u64))?;
            let outs: Vec<f64> = points
                .iter()
                .map(|x| nn::forward(&p, x).map(|o| o[0]))
                .collect::<Result<_>>()?;
            let v = DVector::from_vec(outs);
            Ok(&v * v.transpose())
        })
        .collect::<Result<_>>()?;
    let mut acc = DMatrix::zeros(n, n);
    for t in &per_init {
        acc += t;
    }
    Ok(acc / m as f64)
}

fn sym_eigen(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let max_asym = (a - a.transpose()).abs().max();
    if max_asym > 1e-10 {
        return Err(Error::Conditioning(format!("matrix not symmetric (max asymmetry {max_asym})")));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    Ok((eig.eigenvectors, eig.eigenvalues))
}

/// The linear-dynamics operator `A_t = Theta^{-1} (I - exp(-eta Theta t))`
/// via symmetric eigendecomposition. Eigenvalues are clamped at 0; a ridge
/// of 1e-10 guards the inversion. Pass `t = f64::INFINITY` for the
/// fully-trained limit `Theta^{-1}`.
pub fn mean_operator(theta: &DMatrix<f64>, eta: f64, t: f64) -> Result<DMatrix<f64>> {
    if eta < 0.0 || t < 0.0 {
        return Err(Error::Config("eta and t must be non-negative".into()));
    }
    let (q, vals) = sym_eigen(theta)?;
    let lam_max = vals.iter().cloned().fold(0.0, f64::max);
    let g: Vec<f64> = vals
        .iter()
        .map(|&lam| -> Result<f64> {
            if lam < -1e-8 * lam_max.max(1.0) {
                return Err(Error::Conditioning(format!(
                    "kernel has a significantly negative eigenvalue {lam}"
                )));
            }
            let lam = lam.max(0.0);
            Ok(if t.is_infinite() {
                1.0 / (lam + RIDGE)
            } else if lam == 0.0 {
                eta * t
            } else {
                -(-eta * lam * t).exp_m1() / lam
            })
        })
        .collect::<Result<_>>()?;
    let d = DMatrix::from_diagonal(&DVector::from_vec(g));
    Ok(&q * d * q.transpose())
}

/// GP mean prediction `m_t(x) = Theta(x, X) [Theta^{-1} T_t Y]`.
/// `theta_cross` is the cross-kernel row Theta(x, x_i).
pub fn gp_mean(
    theta_train: &DMatrix<f64>,
    y: &[f64],
    eta: f64,
    t: f64,
    theta_cross: &[f64],
) -> Result<f64> {
    let n = theta_train.nrows();
    if y.len() != n || theta_cross.len() != n {
        return Err(Error::Contract("dimension mismatch in gp_mean".into()));
    }
    let a = mean_operator(theta_train, eta, t)?;
    let w = a * DVector::from_column_slice(y);
    Ok(DVector::from_column_slice(theta_cross).dot(&w))
}

/// Cross-kernel rows needed to evaluate the posterior at one probe point.
#[derive(Debug, Clone)]
pub struct ProbeRows {
    /// Theta(x, x_i)
    pub theta: Vec<f64>,
    /// K(x, x_i)
    pub k: Vec<f64>,
}

/// GP covariance
/// `Sigma_t(x,x') = K(x,x') + S1 - (S2 + h.c.)` with
/// `S1 = Theta(x,X) A K A Theta(X,x')` and `S2 = Theta(x,X) A K(X,x')`,
/// where `A = Theta^{-1} T_t`.
pub fn gp_covariance(
    theta_train: &DMatrix<f64>,
    k_train: &DMatrix<f64>,
    eta: f64,
    t: f64,
    x: &ProbeRows,
    xp: &ProbeRows,
    k_x_xp: f64,
) -> Result<f64> {
    let n = theta_train.nrows();
    if [x.theta.len(), x.k.len(), xp.theta.len(), xp.k.len()].iter().any(|&l| l != n) {
        return Err(Error::Contract("dimension mismatch in gp_covariance".into()));
    }
    let a = mean_operator(theta_train, eta, t)?;
    let tx = DVector::from_column_slice(&x.theta);
    let txp = DVector::from_column_slice(&xp.theta);
    let kx = DVector::from_column_slice(&x.k);
    let kxp = DVector::from_column_slice(&xp.k);
    let atx = &a * &tx;
    let atxp = &a * &txp;
    let s1 = atx.dot(&(k_train * &atxp));
    let s2 = atx.dot(&kxp) + atxp.dot(&kx);
    Ok(k_x_xp + s1 - s2)
}

/// Posterior variance at a probe point; small negatives from round-off are
/// clamped to 0, anything beyond -1e-8 is a numeric failure.
pub fn gp_variance(
    theta_train: &DMatrix<f64>,
    k_train: &DMatrix<f64>,
    eta: f64,
    t: f64,
    x: &ProbeRows,
    k_x_x: f64,
) -> Result<f64> {
    let v = gp_covariance(theta_train, k_train, eta, t, x, x, k_x_x)?;
    if v < -1e-8 {
        return Err(Error::Numeric(format!("negative posterior variance {v}")));
    }
    Ok(v.max(0.0))
}

/// Max over the supplied group elements of |f(s) - f(g s)| for a scalar
/// function of 6-D reacher states.
pub fn invariance_deviation(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    s: &[f64],
    angles: &[f64],
) -> Result<f64> {
    let base = f(s)?;
    let mut worst: f64 = 0.0;
    for &angle in angles {
        let g = crate::groups::GroupElement::new(angle);
        let rotated = crate::groups::apply(&g, s)?;
        worst = worst.max((f(&rotated)? - base).abs());
    }
    Ok(worst)
}

/// Gaussian tail bound `sqrt(2/pi) (sigma/delta) exp(-delta^2 / 2 sigma^2)`.
/// Raw value; may exceed 1 for small delta.
pub fn mc_tail_bound(sigma: f64, delta: f64) -> Result<f64> {
    if sigma <= 0.0 || delta <= 0.0 {
        return Err(Error::Config("mc_tail_bound needs sigma, delta > 0".into()));
    }
    Ok((2.0 / std::f64::consts::PI).sqrt() * (sigma / delta) * (-delta * delta / (2.0 * sigma * sigma)).exp())
}

/// Hoorfar-Hassani upper bound on the principal Lambert branch:
/// `W0(x) <= ln((2x + 1) / (1 + ln(x + 1)))` for x > 0.
pub fn lambert_w0_upper(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Config("lambert bound needs x > 0".into()));
    }
    Ok(((2.0 * x + 1.0) / (1.0 + (x + 1.0).ln())).ln())
}

/// Principal Lambert branch by Newton iteration on `w e^w = x`, seeded at
/// the Hoorfar upper bound. Tolerance 1e-12, at most 100 iterations.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Config("lambert_w0 needs x > 0".into()));
    }
    let mut w = lambert_w0_upper(x)?.max(1e-12);
    for _ in 0..100 {
        let ew = w.exp();
        let delta = (w * ew - x) / (ew * (w + 1.0));
        w -= delta;
        if delta.abs() < 1e-12 {
            return Ok(w);
        }
    }
    Err(Error::Numeric(format!("Lambert W Newton iteration did not converge for x = {x}")))
}

/// Threshold such that the tail bound equals `eps`:
/// `delta = sigma sqrt(W0(2 / (pi eps^2)))`. Returns the exact Newton value
/// and the Hoorfar-based upper bound.
pub fn delta_for_confidence(sigma: f64, eps: f64) -> Result<(f64, f64)> {
    if sigma <= 0.0 {
        return Err(Error::Config("delta_for_confidence needs sigma > 0".into()));
    }
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(Error::Config("eps must lie in (0, 1)".into()));
    }
    let x = 2.0 / (std::f64::consts::PI * eps * eps);
    Ok((sigma * lambert_w0(x)?.sqrt(), sigma * lambert_w0_upper(x)?.sqrt()))
}

/// Lipschitz suboptimality bound
/// `L_R / ((1 - gamma)(1 - gamma L_T (1 + L_pi))) * E[W]`.
pub fn maran_bound(l_t: f64, l_r: f64, l_pi: f64, gamma: f64, expected_w: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config("gamma must lie in [0, 1)".into()));
    }
    let product = gamma * l_t * (1.0 + l_pi);
    if product >= 1.0 {
        return Err(Error::Hypothesis(format!(
            "gamma * L_T * (1 + L_pi) = {product} >= 1"
        )));
    }
    Ok(l_r / ((1.0 - gamma) * (1.0 - product)) * expected_w)
}

/// Mean Wasserstein distance between two scalar deterministic policies over
/// a visitation sample: (1/n) sum |pi1(s) - pi2(s)|.
pub fn wasserstein_deterministic(
    pi1: &dyn Fn(&[f64]) -> f64,
    pi2: &dyn Fn(&[f64]) -> f64,
    states: &[Vec<f64>],
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::Config("wasserstein needs at least one state".into()));
    }
    Ok(states.iter().map(|s| (pi1(s) - pi2(s)).abs()).sum::<f64>() / states.len() as f64)
}

/// Assembled generalisation bound:
/// `L_R / ((1-gamma)(1 - gamma L_T (1 + L_pi))) * (kappa C_theta + C_sigma / sqrt(N))`.
#[allow(clippy::too_many_arguments)]
pub fn gti_bound(
    kappa: f64,
    c_theta: f64,
    c_sigma: f64,
    n: usize,
    eps: f64,
    l_t: f64,
    l_r: f64,
    l_pi: f64,
    gamma: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("ensemble size N must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(Error::Config("eps must lie in (0, 1)".into()));
    }
    let w = kappa * c_theta + c_sigma / (n as f64).sqrt();
    maran_bound(l_t, l_r, l_pi, gamma, w)
}

/// Least-squares slope through the origin of deviation against kappa: the
/// empirical stand-in for the kernel-Lipschitz constant C_theta.
pub fn c_theta_empirical(kappas: &[f64], deviations: &[f64]) -> Result<f64> {
    if kappas.is_empty() || kappas.len() != deviations.len() {
        return Err(Error::Config("need matching, non-empty kappa/deviation lists".into()));
    }
    let num: f64 = kappas.iter().zip(deviations).map(|(k, d)| k * d).sum();
    let den: f64 = kappas.iter().map(|k| k * k).sum();
    if den == 0.0 {
        return Err(Error::Numeric("all kappas are zero".into()));
    }
    Ok(num / den)
}

/// Empirical C_sigma from a measured single-member output std:
/// the tail-bound inversion gives `delta = (sigma/sqrt(N)) sqrt(W0(...))`,
/// so `C_sigma(eps) = sigma sqrt(W0(2/(pi eps^2)))`.
pub fn c_sigma_empirical(member_std: f64, eps: f64) -> Result<f64> {
    if member_std < 0.0 {
        return Err(Error::Config("member std must be >= 0".into()));
    }
    if member_std == 0.0 {
        return Ok(0.0);
    }
    delta_for_confidence(member_std, eps).map(|(exact, _)| exact)
}

/// Samples `n` states from the gamma-discounted visitation distribution by
/// rolling the policy with geometric stopping (success probability
/// 1 - gamma). `max_steps` guards environments that never terminate.
pub fn visitation_sample<E: Environment, P: Policy<E>>(
    env: &E,
    ctx: &E::Ctx,
    policy: &P,
    gamma: f64,
    n: usize,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(E::State, usize)>> {
    use rand::Rng;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config("gamma must lie in [0, 1)".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = env.reset(ctx);
        let mut step = 0usize;
        loop {
            if rng.gen::<f64>() < 1.0 - gamma || step >= max_steps {
                out.push((s.clone(), step));
                break;
            }
            let a = policy.act(env, ctx, &s, rng);
            let r = env.step(ctx, &s, &a);
            if r.terminated || r.truncated {
                out.push((r.next, step + 1));
                break;
            }
            s = r.next;
            step += 1;
        }
    }
    Ok(out)
}
