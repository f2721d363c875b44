//! Second-order cone algebra in the solver's internal layout, where the
//! scalar bound comes first: `u = (u0, u1)`, `u0 >= ||u1||`.

/// `u0 v0 - u1 . v1`.
pub(super) fn jdot(u: &[f64], v: &[f64]) -> f64 {
    u[0] * v[0] - u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
}

fn tail_norm(u: &[f64]) -> f64 {
    u[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Smallest spectral value `u0 - ||u1||`.
pub(super) fn min_eig(u: &[f64]) -> f64 {
    u[0] - tail_norm(u)
}

/// Jordan product `u o v = (u . v, u0 v1 + v0 u1)`.
pub(super) fn jprod(u: &[f64], v: &[f64], out: &mut [f64]) {
    out[0] = u.iter().zip(v).map(|(a, b)| a * b).sum();
    for i in 1..u.len() {
        out[i] = u[0] * v[i] + v[0] * u[i];
    }
}

/// Solves `lambda o x = xi` for `x`.
pub(super) fn jdiv(lambda: &[f64], xi: &[f64], out: &mut [f64]) {
    let det = jdot(lambda, lambda);
    let l1_xi1: f64 = lambda[1..].iter().zip(&xi[1..]).map(|(a, b)| a * b).sum();
    out[0] = (lambda[0] * xi[0] - l1_xi1) / det;
    for i in 1..lambda.len() {
        out[i] = (xi[i] - lambda[i] * out[0]) / lambda[0];
    }
}

/// Largest `alpha >= 0` with `u + alpha du` in the cone (`f64::INFINITY`
/// when unbounded). `u` must be interior.
pub(super) fn max_step(u: &[f64], du: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    if du[0] < 0.0 {
        alpha = -u[0] / du[0];
    }
    if u.len() == 1 {
        return alpha;
    }
    // q(alpha) = a alpha^2 + 2 b alpha + c, the J-norm of u + alpha du.
    let a = jdot(du, du);
    let b = jdot(u, du);
    let c = jdot(u, u).max(0.0);
    let root = if a.abs() <= 1e-300 {
        if b < 0.0 {
            -c / (2.0 * b)
        } else {
            f64::INFINITY
        }
    } else {
        let disc = b * b - a * c;
        if disc < 0.0 {
            f64::INFINITY
        } else {
            // Roots c / (-b +/- sqrt(disc)); pick the smallest positive.
            let sq = disc.sqrt();
            let cands = [(-b - sq) / a, (-b + sq) / a];
            cands
                .into_iter()
                .filter(|r| *r > 0.0)
                .fold(f64::INFINITY, f64::min)
        }
    };
    alpha.min(root)
}

/// Nesterov-Todd scaling `W = eta * W_bar` for one cone, with
/// `W_bar = [w0, w1^T; w1, I + w1 w1^T / (1 + w0)]` and `W z = W^{-1} s`.
#[derive(Debug, Clone)]
pub(super) struct NtScaling {
    pub eta: f64,
    pub w: Vec<f64>,
}

impl NtScaling {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[0] = 1.0;
        Self { eta: 1.0, w }
    }

    pub fn new(s: &[f64], z: &[f64]) -> Self {
        let sn = jdot(s, s).max(f64::MIN_POSITIVE).sqrt();
        let zn = jdot(z, z).max(f64::MIN_POSITIVE).sqrt();
        let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
        let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
        let gamma = ((1.0 + sb.iter().zip(&zb).map(|(a, b)| a * b).sum::<f64>()) / 2.0).sqrt();
        let mut w: Vec<f64> = sb
            .iter()
            .zip(&zb)
            .enumerate()
            .map(|(i, (a, b))| {
                let v = if i == 0 { a + b } else { a - b };
                v / (2.0 * gamma)
            })
            .collect();
        // Renormalize onto the hyperboloid w0^2 - ||w1||^2 = 1.
        let w1n = tail_norm(&w);
        w[0] = (1.0 + w1n * w1n).sqrt();
        Self {
            eta: (sn / zn).sqrt(),
            w,
        }
    }

    fn apply_bar(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        let w = &self.w;
        let sgn = if inverse { -1.0 } else { 1.0 };
        let w1v1: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
        out[0] = w[0] * v[0] + sgn * w1v1;
        let k = w1v1 / (1.0 + w[0]) + sgn * v[0];
        for i in 1..v.len() {
            out[i] = v[i] + k * w[i];
        }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.apply_bar(v, out, false);
        out.iter_mut().for_each(|o| *o *= self.eta);
    }

    pub fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        self.apply_bar(v, out, true);
        out.iter_mut().for_each(|o| *o /= self.eta);
    }
}
