//! MISO downlink signal model, PSK constellations and the constructive
//! interference (CI) condition, together with the complex-to-real lifting
//! used by every optimization routine in the crate.
//!
//! The lifted forms use two fixed structural operators on `R^{2M}`:
//! `A = [I, 0; 0, -I]` and `B = [0, I; I, 0]`. They are never stored as
//! matrices; [`apply_a`] and [`apply_b`] implement them as sign flips and
//! block swaps.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub type C64 = Complex64;

const UNIT_TOL: f64 = 1e-12;

/// M-ary PSK constellation with symbols `exp(j 2 theta k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PskConstellation {
    mod_order: usize,
    theta: f64,
    symbols: Vec<C64>,
}

impl PskConstellation {
    pub fn mod_order(&self) -> usize {
        self.mod_order
    }

    /// Half the angular width of a decision sector, `pi / mod_order`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> C64 {
        self.symbols[index % self.mod_order]
    }

    /// Minimum angular distance decision: index of the sector containing `arg(y)`.
    pub fn decide(&self, y: C64) -> usize {
        let step = 2.0 * self.theta;
        let k = (y.arg() / step).round() as i64;
        k.rem_euclid(self.mod_order as i64) as usize
    }
}

/// Builds the PSK constellation of the given order.
pub fn make_constellation(mod_order: usize) -> Result<PskConstellation> {
    if !(2..=64).contains(&mod_order) || !mod_order.is_power_of_two() {
        return Err(Error::Config(format!(
            "unsupported modulation order {mod_order}; expected one of 2, 4, 8, 16, 32, 64"
        )));
    }
    let theta = PI / mod_order as f64;
    let symbols = (0..mod_order)
        .map(|k| C64::from_polar(1.0, 2.0 * theta * k as f64))
        .collect();
    Ok(PskConstellation {
        mod_order,
        theta,
        symbols,
    })
}

/// One user's view of the downlink: estimated channel, data symbol, noise,
/// SNR target, connect-probability target and the diagonal error covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScenario {
    h_est: Vec<C64>,
    d: C64,
    sigma_z: f64,
    gamma_hat: f64,
    p_hat: f64,
    err_diag: Vec<f64>,
}

impl UserScenario {
    /// `err_diag` holds the diagonal of the complex channel-error covariance.
    pub fn new(
        h_est: Vec<C64>,
        d: C64,
        sigma_z: f64,
        gamma_hat: f64,
        p_hat: f64,
        err_diag: Vec<f64>,
    ) -> Result<Self> {
        if h_est.is_empty() {
            return Err(Error::Usage("h_est must have at least one antenna".into()));
        }
        check_len("err_cov diagonal", err_diag.len(), h_est.len())?;
        if err_diag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(
                "err_cov diagonal entries must be finite and nonnegative".into(),
            ));
        }
        if !(sigma_z.is_finite() && sigma_z > 0.0) {
            return Err(Error::Domain(format!("sigma_z must be > 0, got {sigma_z}")));
        }
        if !(gamma_hat.is_finite() && gamma_hat >= 0.0) {
            return Err(Error::Domain(format!(
                "gamma_hat must be >= 0, got {gamma_hat}"
            )));
        }
        if !(0.0..1.0).contains(&p_hat) {
            return Err(Error::Domain(format!("p_hat must lie in [0, 1), got {p_hat}")));
        }
        if (d.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!(
                "data symbol must have unit modulus, got |d| = {}",
                d.norm()
            )));
        }
        if h_est.iter().any(|h| !(h.re.is_finite() && h.im.is_finite())) {
            return Err(Error::Domain("h_est entries must be finite".into()));
        }
        Ok(Self {
            h_est,
            d,
            sigma_z,
            gamma_hat,
            p_hat,
            err_diag,
        })
    }

    pub fn h_est(&self) -> &[C64] {
        &self.h_est
    }
    pub fn d(&self) -> C64 {
        self.d
    }
    pub fn sigma_z(&self) -> f64 {
        self.sigma_z
    }
    pub fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }
    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }
    pub fn err_diag(&self) -> &[f64] {
        &self.err_diag
    }
    pub fn n_antennas(&self) -> usize {
        self.h_est.len()
    }

    pub fn with_gamma_hat(&self, gamma_hat: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(gamma_hat.is_finite() && gamma_hat >= 0.0) {
            return Err(Error::Domain(format!(
                "gamma_hat must be >= 0, got {gamma_hat}"
            )));
        }
        out.gamma_hat = gamma_hat;
        Ok(out)
    }

    pub fn with_p_hat(&self, p_hat: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p_hat) {
            return Err(Error::Domain(format!("p_hat must lie in [0, 1), got {p_hat}")));
        }
        let mut out = self.clone();
        out.p_hat = p_hat;
        Ok(out)
    }

    /// SNR margin `sqrt(gamma_hat) * sigma_z` on the real axis.
    pub fn margin(&self) -> f64 {
        self.gamma_hat.sqrt() * self.sigma_z
    }
}

/// Extracts the diagonal of a covariance given as a dense matrix, rejecting
/// anything with nonzero off-diagonal entries.
pub fn diagonal_covariance(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = rows.len();
    let mut diag = Vec::with_capacity(m);
    for (i, row) in rows.iter().enumerate() {
        check_len("covariance row", row.len(), m)?;
        for (j, v) in row.iter().enumerate() {
            if i != j && *v != 0.0 {
                return Err(Error::Config(format!(
                    "only diagonal error covariances are supported (entry ({i},{j}) = {v})"
                )));
            }
        }
        diag.push(row[i]);
    }
    Ok(diag)
}

/// Real-valued lift of a user's estimated channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedChannel {
    /// `[Re(d* h_est); Im(d* h_est)]`.
    pub h_tilde: Vec<f64>,
    /// Diagonal of the square root of the lifted error covariance
    /// `[Sigma, 0; 0, Sigma] / 2`.
    pub sigma_tilde_sqrt: Vec<f64>,
}

impl LiftedChannel {
    pub fn dim(&self) -> usize {
        self.h_tilde.len()
    }
}

pub fn real_lift(user: &UserScenario) -> LiftedChannel {
    let dc = user.d.conj();
    let m = user.n_antennas();
    let mut h_tilde = vec![0.0; 2 * m];
    for (k, h) in user.h_est.iter().enumerate() {
        let g = dc * h;
        h_tilde[k] = g.re;
        h_tilde[m + k] = g.im;
    }
    let half: Vec<f64> = user.err_diag.iter().map(|v| (v / 2.0).sqrt()).collect();
    let sigma_tilde_sqrt = half.iter().chain(half.iter()).copied().collect();
    LiftedChannel {
        h_tilde,
        sigma_tilde_sqrt,
    }
}

/// Stacks real and imaginary parts: `[Re(x); Im(x)]`.
pub fn lift_vector(x: &[C64]) -> Vec<f64> {
    x.iter().map(|v| v.re).chain(x.iter().map(|v| v.im)).collect()
}

pub fn unlift_vector(x_tilde: &[f64]) -> Vec<C64> {
    let m = x_tilde.len() / 2;
    (0..m).map(|k| C64::new(x_tilde[k], x_tilde[m + k])).collect()
}

/// `A x = [x_re; -x_im]`.
pub fn apply_a(x: &[f64]) -> Vec<f64> {
    let m = x.len() / 2;
    x.iter()
        .enumerate()
        .map(|(i, v)| if i < m { *v } else { -v })
        .collect()
}

/// `B x = [x_im; x_re]`.
pub fn apply_b(x: &[f64]) -> Vec<f64> {
    let m = x.len() / 2;
    x[m..].iter().chain(x[..m].iter()).copied().collect()
}

/// Which of the two CI half-cones a quantity belongs to: `A - B/tan(theta)`
/// (`Minus`) or `A + B/tan(theta)` (`Plus`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }
}

/// `(A +/- B/tan(theta)) x` with the sign picked by `side`.
pub fn apply_cone_operator(x: &[f64], inv_tan: f64, side: Side) -> Vec<f64> {
    let s = side.sign() * inv_tan;
    apply_a(x)
        .into_iter()
        .zip(apply_b(x))
        .map(|(a, b)| a + s * b)
        .collect()
}

/// Stochastic map `Sigma_tilde^{1/2} (A +/- B/tan(theta))`, stored in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    scale: Vec<f64>,
    inv_tan: f64,
    side: Side,
}

impl ErrorMap {
    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        apply_cone_operator(x, self.inv_tan, self.side)
            .into_iter()
            .zip(&self.scale)
            .map(|(v, s)| v * s)
            .collect()
    }

    /// Dense row-major copy of the map.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let m = n / 2;
        let s = self.side.sign() * self.inv_tan;
        (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                if i < m {
                    row[i] = self.scale[i];
                    row[m + i] = self.scale[i] * s;
                } else {
                    row[i] = -self.scale[i];
                    row[i - m] = self.scale[i] * s;
                }
                row
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.scale.iter().all(|s| *s == 0.0)
    }
}

/// Deterministic directions and stochastic maps of the two rotated CI cones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeData {
    pub a_minus: Vec<f64>,
    pub a_plus: Vec<f64>,
    pub d_minus: ErrorMap,
    pub d_plus: ErrorMap,
}

impl ConeData {
    pub fn dim(&self) -> usize {
        self.a_minus.len()
    }
}

pub fn cone_data(lift: &LiftedChannel, theta: f64) -> Result<ConeData> {
    if !(theta > 0.0 && theta <= PI / 4.0 + 1e-15) {
        return Err(Error::Config(format!(
            "theta must lie in (0, pi/4], got {theta}"
        )));
    }
    let inv_tan = 1.0 / theta.tan();
    // A and B are symmetric, so (A -/+ B/tan)^T h = (A -/+ B/tan) h.
    let a_minus = apply_cone_operator(&lift.h_tilde, inv_tan, Side::Minus);
    let a_plus = apply_cone_operator(&lift.h_tilde, inv_tan, Side::Plus);
    let map = |side| ErrorMap {
        scale: lift.sigma_tilde_sqrt.clone(),
        inv_tan,
        side,
    };
    Ok(ConeData {
        a_minus,
        a_plus,
        d_minus: map(Side::Minus),
        d_plus: map(Side::Plus),
    })
}

fn inner(h: &[C64], x: &[C64]) -> Result<C64> {
    check_len("channel/precoder", x.len(), h.len())?;
    Ok(h.iter().zip(x).map(|(a, b)| a * b).sum())
}

/// Whether a user with channel `h` and symbol `d` receives constructive
/// interference from `x` at SNR target `gamma_hat`.
pub fn ci_holds(
    h: &[C64],
    d: C64,
    x: &[C64],
    gamma_hat: f64,
    sigma_z: f64,
    theta: f64,
) -> Result<bool> {
    if gamma_hat < 0.0 {
        return Err(Error::Usage(format!("gamma_hat must be >= 0, got {gamma_hat}")));
    }
    let g = d.conj() * inner(h, x)?;
    Ok(g.im.abs() / theta.tan() <= g.re - gamma_hat.sqrt() * sigma_z)
}

/// `|h^T x|^2 / sigma_z^2`.
pub fn snr(h: &[C64], x: &[C64], sigma_z: f64) -> Result<f64> {
    Ok(inner(h, x)?.norm_sqr() / (sigma_z * sigma_z))
}

pub fn transmit_power(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
