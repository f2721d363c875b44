//! Bivariate normal lower-orthant probabilities.
//!
//! `P{X <= a, Y <= b}` for a standard bivariate normal with correlation `rho`
//! is written as `Phi(a) Phi(b)` plus the integral of the bivariate density
//! over the correlation parameter from 0 to `rho`. After the substitution
//! `r = sin(phi)` the integrand is smooth on the whole range and is
//! integrated with adaptive Gauss-Legendre quadrature.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::special::norm_cdf;

/// Absolute tolerance of the correlation integral.
pub const QUAD_TOL: f64 = 1e-10;
/// Beyond this `|rho|` the perfectly correlated closed form is used.
pub const RHO_CLAMP: f64 = 1.0 - 1e-9;

const GL_ORDER: usize = 10;
const MAX_DEPTH: u32 = 30;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| legendre_nodes(GL_ORDER))
}

/// Nodes and weights on [-1, 1] by Newton iteration on the Legendre polynomial.
fn legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn gl<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * gauss_legendre()
        .iter()
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (gl(f, a, m), gl(f, m, b));
    if depth >= MAX_DEPTH || (l + r - whole).abs() <= tol {
        return l + r;
    }
    adapt(f, a, m, l, 0.5 * tol, depth + 1) + adapt(f, m, b, r, 0.5 * tol, depth + 1)
}

/// Adaptive Gauss-Legendre quadrature of `f` over `[a, b]` to absolute `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gl(&f, a, b);
    adapt(&f, a, b, whole, tol, 0)
}

/// `P{X <= a, Y <= b}` for standard normals with correlation `rho`.
pub fn bvn_lower(a: f64, b: f64, rho: f64) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return norm_cdf(b);
    }
    if b == f64::INFINITY {
        return norm_cdf(a);
    }
    if rho > RHO_CLAMP {
        return norm_cdf(a.min(b));
    }
    if rho < -RHO_CLAMP {
        return (norm_cdf(a) + norm_cdf(b) - 1.0).max(0.0);
    }
    let base = norm_cdf(a) * norm_cdf(b);
    if rho == 0.0 {
        return base;
    }
    let (aa, ab, bb) = (a * a, a * b, b * b);
    let density = |phi: f64| {
        let (s, c) = phi.sin_cos();
        (-(aa - 2.0 * ab * s + bb) / (2.0 * c * c)).exp()
    };
    let tail = integrate(density, 0.0, rho.asin(), QUAD_TOL * 2.0 * PI) / (2.0 * PI);
    (base + tail).clamp(0.0, 1.0)
}
