//! Error function, its inverse, and the standard normal CDF.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const ERF_INV_TOL: f64 = 1e-13;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse error function on `(-1, 1)`.
///
/// Newton iteration on `erf` from a closed-form starting point, with a
/// bisection bracket that catches any step leaving `[lo, hi]`.
pub fn erf_inv(p: f64) -> Result<f64> {
    if !(p > -1.0 && p < 1.0) {
        return Err(Error::Domain(format!("erf_inv requires |p| < 1, got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let q = p.abs();
    // erf(x) - q, evaluated through erfc in the upper half for accuracy.
    let resid = |x: f64| {
        if q > 0.5 {
            (1.0 - q) - erfc(x)
        } else {
            erf(x) - q
        }
    };
    let (mut lo, mut hi) = (0.0_f64, 6.5_f64);
    let mut x = initial_guess(q).clamp(lo, hi);
    for _ in 0..200 {
        let f = resid(x);
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = 2.0 / PI.sqrt() * (-x * x).exp();
        let mut next = x - f / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= ERF_INV_TOL * x.abs().max(1.0);
        x = next;
        if done || hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(x.copysign(p))
}

// Winitzki's approximation, good to a few 1e-3.
fn initial_guess(q: f64) -> f64 {
    let a = 0.147;
    let ln = (1.0 - q * q).ln();
    let t = 2.0 / (PI * a) + ln / 2.0;
    ((t * t - ln / a).sqrt() - t).sqrt()
}
