//! Probability kernels for the connect probability of a precoded user.
//!
//! For a lifted precoder `x~`, the CI condition under Gaussian channel error
//! holds iff `v1 >= w1` and `v2 >= w2`, where `(v1, v2)` is a zero-mean
//! bivariate normal pair. [`moments`] computes its parameters,
//! [`connect_prob_exact`] integrates the orthant, [`first_tighten_bound`]
//! drops the joint lower-orthant term, and [`connect_prob_mc`] samples.

pub mod bvn;
pub mod special;

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{dot, norm, ConeData};
use crate::par;

pub use special::{erf, erf_inv, erfc, norm_cdf};

/// Parameters of `(v1, v2) ~ N(0, 0, sigma_v1^2, sigma_v2^2, rho)` and the
/// thresholds `w1`, `w2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub w1: f64,
    pub w2: f64,
    pub sigma_v1: f64,
    pub sigma_v2: f64,
    /// Correlation; meaningless (set to 0) when `degenerate`.
    pub rho: f64,
    /// `sigma_v1 * sigma_v2 == 0`.
    pub degenerate: bool,
}

impl GaussianMoments {
    pub fn new(w1: f64, w2: f64, sigma_v1: f64, sigma_v2: f64, rho: f64) -> Self {
        let degenerate = sigma_v1 * sigma_v2 == 0.0;
        Self {
            w1,
            w2,
            sigma_v1,
            sigma_v2,
            rho: if degenerate { 0.0 } else { rho.clamp(-1.0, 1.0) },
            degenerate,
        }
    }

    /// `(mu1, mu2) = (w1 / (sqrt2 sigma_v1), w2 / (sqrt2 sigma_v2))`.
    pub fn mu(&self) -> (f64, f64) {
        (
            self.w1 * FRAC_1_SQRT_2 / self.sigma_v1,
            self.w2 * FRAC_1_SQRT_2 / self.sigma_v2,
        )
    }
}

/// Probability estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_samples: u64,
}

impl ProbEstimate {
    pub fn from_counts(hits: u64, n_samples: u64) -> Self {
        let value = if n_samples == 0 {
            0.0
        } else {
            hits as f64 / n_samples as f64
        };
        let std_err = if n_samples == 0 {
            0.0
        } else {
            (value * (1.0 - value) / n_samples as f64).sqrt()
        };
        Self {
            value,
            std_err,
            n_samples,
        }
    }
}

/// `g(mu1, mu2) = -(erf(mu1) + erf(mu2)) / 2`.
pub fn g_tightening(mu1: f64, mu2: f64) -> f64 {
    -(erf(mu1) + erf(mu2)) / 2.0
}

/// Sphere radius `sqrt2 * erf_inv(p_hat)` for a connect-probability target.
pub fn radius(p_hat: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_hat) {
        return Err(Error::Domain(format!(
            "radius requires p_hat in [0, 1), got {p_hat}"
        )));
    }
    Ok(SQRT_2 * erf_inv(p_hat)?)
}

pub fn moments(
    x_tilde: &[f64],
    cone: &ConeData,
    gamma_hat: f64,
    sigma_z: f64,
) -> Result<GaussianMoments> {
    check_len("x_tilde", x_tilde.len(), cone.dim())?;
    let margin = gamma_hat.sqrt() * sigma_z;
    let w1 = margin - dot(&cone.a_minus, x_tilde);
    let w2 = margin - dot(&cone.a_plus, x_tilde);
    let u1 = cone.d_minus.apply(x_tilde);
    let u2 = cone.d_plus.apply(x_tilde);
    let (s1, s2) = (norm(&u1), norm(&u2));
    let rho = if s1 * s2 > 0.0 {
        dot(&u1, &u2) / (s1 * s2)
    } else {
        0.0
    };
    Ok(GaussianMoments::new(w1, w2, s1, s2, rho))
}

/// `P{v >= w}` for one component, including the zero-variance limit.
fn upper_tail(w: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        if w <= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        norm_cdf(-w / sigma)
    }
}

/// `P{v1 >= w1, v2 >= w2}`.
///
/// Evaluated as `-(erf(mu1) + erf(mu2)) / 2 + P{v1 <= w1, v2 <= w2}`, so the
/// result never falls below [`first_tighten_bound`].
pub fn connect_prob_exact(m: &GaussianMoments) -> f64 {
    if m.degenerate {
        return upper_tail(m.w1, m.sigma_v1) * upper_tail(m.w2, m.sigma_v2);
    }
    let (mu1, mu2) = m.mu();
    let joint = bvn::bvn_lower(m.w1 / m.sigma_v1, m.w2 / m.sigma_v2, m.rho).max(0.0);
    (g_tightening(mu1, mu2) + joint).clamp(0.0, 1.0)
}

/// Lower bound on the connect probability obtained by dropping the joint
/// lower-orthant term.
pub fn first_tighten_bound(m: &GaussianMoments) -> Result<f64> {
    if m.degenerate {
        return Err(Error::Domain(
            "first tightening bound is undefined for zero-variance moments".into(),
        ));
    }
    let (mu1, mu2) = m.mu();
    Ok(g_tightening(mu1, mu2))
}

/// Monte Carlo connect probability: draws `eps ~ N(0, I_{2M})` and counts
/// `(a-/+ ^T x~ + eps^T D-/+ x~) >= sqrt(gamma_hat) sigma_z` on both cones.
pub fn connect_prob_mc(
    x_tilde: &[f64],
    cone: &ConeData,
    gamma_hat: f64,
    sigma_z: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ProbEstimate> {
    if n_samples == 0 {
        return Err(Error::Usage("n_samples must be >= 1".into()));
    }
    check_len("x_tilde", x_tilde.len(), cone.dim())?;
    let margin = gamma_hat.sqrt() * sigma_z;
    let (m1, m2) = (dot(&cone.a_minus, x_tilde), dot(&cone.a_plus, x_tilde));
    let u1 = cone.d_minus.apply(x_tilde);
    let u2 = cone.d_plus.apply(x_tilde);
    let dim = x_tilde.len();
    let counts = par::chunked(n_samples, seed, |rng, len| {
        let mut eps = vec![0.0; dim];
        let mut hits = 0u64;
        for _ in 0..len {
            for e in eps.iter_mut() {
                *e = StandardNormal.sample(rng);
            }
            if m1 + dot(&u1, &eps) >= margin && m2 + dot(&u2, &eps) >= margin {
                hits += 1;
            }
        }
        hits
    });
    Ok(ProbEstimate::from_counts(
        counts.iter().sum(),
        n_samples as u64,
    ))
}
