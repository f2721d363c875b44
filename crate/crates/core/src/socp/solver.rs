//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! with Nesterov-Todd scaling and a Mehrotra predictor-corrector.
//!
//! Internally the problem is held in the conic standard form
//!
//! ```text
//! minimize c^T x   s.t.   G x + s = h,   s in K
//! ```
//!
//! with `G = -[G_1; ...; G_K]` (rows of each cone reordered so that the
//! scalar bound comes first) and `h = [h_1; ...; h_K]`. The embedding adds
//! `tau, kappa >= 0` and drives
//!
//! ```text
//! G^T z + c tau = 0,   G x + s - h tau = 0,   kappa + c^T x + h^T z = 0
//! ```
//!
//! to zero, so that either `tau > 0` (optimal point `x / tau`) or
//! `kappa > 0` (an infeasibility or unboundedness certificate).

use nalgebra::{DMatrix, DVector};

use super::cone::{jdiv, jprod, max_step, min_eig, NtScaling};
use super::{Residuals, SocpProblem, SocpSolution, SolveStatus};
use crate::error::{Error, Result};

const STEP_FRACTION: f64 = 0.99;
const STATIC_REG: f64 = 1e-13;
const REFINE_STEPS: usize = 3;

struct Layout {
    /// (start, dim) of each cone in the stacked internal vectors.
    blocks: Vec<(usize, usize)>,
    m: usize,
}

impl Layout {
    fn new(problem: &SocpProblem) -> Self {
        let mut blocks = Vec::with_capacity(problem.cones.len());
        let mut start = 0;
        for c in &problem.cones {
            blocks.push((start, c.rows()));
            start += c.rows();
        }
        Self { blocks, m: start }
    }

    /// Internal index of user row `r` of a `dim`-row cone (scalar row first).
    fn internal_row(r: usize, dim: usize) -> usize {
        if r + 1 == dim {
            0
        } else {
            r + 1
        }
    }

    fn unit(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.m);
        for &(start, _) in &self.blocks {
            e[start] = 1.0;
        }
        e
    }
}

struct Scalings(Vec<NtScaling>);

impl Scalings {
    fn identity(layout: &Layout) -> Self {
        Self(layout.blocks.iter().map(|&(_, d)| NtScaling::identity(d)).collect())
    }

    fn new(layout: &Layout, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        Self(
            layout
                .blocks
                .iter()
                .map(|&(st, d)| NtScaling::new(&s.as_slice()[st..st + d], &z.as_slice()[st..st + d]))
                .collect(),
        )
    }

    fn apply(&self, layout: &Layout, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(layout.m);
        for (w, &(st, d)) in self.0.iter().zip(&layout.blocks) {
            let src = &v.as_slice()[st..st + d];
            let dst = &mut out.as_mut_slice()[st..st + d];
            if inverse {
                w.apply_inv(src, dst);
            } else {
                w.apply(src, dst);
            }
        }
        out
    }
}

/// Factorization of `K = [0, G^T; G, -W^2]`, through the scaled
/// augmented matrix `[delta I, G^T W^{-1}; W^{-1} G, -I]` (LU with partial
/// pivoting). Forming the normal equations instead would square the
/// condition number, which breaks down close to the boundary.
struct KktSolver<'a> {
    g: &'a DMatrix<f64>,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> KktSolver<'a> {
    fn new(layout: &Layout, g: &'a DMatrix<f64>, w: &Scalings) -> Result<Self> {
        let n = g.ncols();
        let m = layout.m;
        let mut k = DMatrix::zeros(n + m, n + m);
        let mut col_in = DVector::zeros(m);
        let mut scale: f64 = 1.0;
        for j in 0..n {
            col_in.copy_from(&g.column(j));
            let col = w.apply(layout, &col_in, true);
            scale = scale.max(col.norm_squared());
            for i in 0..m {
                k[(n + i, j)] = col[i];
                k[(j, n + i)] = col[i];
            }
        }
        for i in 0..n {
            k[(i, i)] = STATIC_REG * scale;
        }
        for i in 0..m {
            k[(n + i, n + i)] = -1.0;
        }
        let lu = k.lu();
        if !lu.is_invertible() {
            return Err(Error::Numerical("KKT matrix is singular".into()));
        }
        Ok(Self { g, lu })
    }

    fn base(&self, layout: &Layout, w: &Scalings, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = r1.len();
        let wr2 = w.apply(layout, r2, true);
        let rhs = DVector::from_iterator(n + layout.m, r1.iter().chain(wr2.iter()).copied());
        let sol = self.lu.solve(&rhs).unwrap_or_else(|| DVector::from_element(n + layout.m, f64::NAN));
        let dx = sol.rows(0, n).into_owned();
        let dz = w.apply(layout, &sol.rows(n, layout.m).into_owned(), true);
        (dx, dz)
    }

    fn solve(&self, layout: &Layout, w: &Scalings, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut x, mut z) = self.base(layout, w, r1, r2);
        for _ in 0..REFINE_STEPS {
            let e1 = r1 - self.g.transpose() * &z;
            let w2z = w.apply(layout, &w.apply(layout, &z, false), false);
            let e2 = r2 - (self.g * &x - w2z);
            if e1.amax().max(e2.amax()) <= 1e-15 * (1.0 + r1.amax().max(r2.amax())) {
                break;
            }
            let (cx, cz) = self.base(layout, w, &e1, &e2);
            x += cx;
            z += cz;
        }
        (x, z)
    }
}

fn cone_step(layout: &Layout, u: &DVector<f64>, du: &DVector<f64>) -> f64 {
    layout
        .blocks
        .iter()
        .map(|&(st, d)| max_step(&u.as_slice()[st..st + d], &du.as_slice()[st..st + d]))
        .fold(f64::INFINITY, f64::min)
}

fn scalar_step(u: f64, du: f64) -> f64 {
    if du < 0.0 {
        -u / du
    } else {
        f64::INFINITY
    }
}

/// Shifts `u` into the interior along the cone identity if needed.
fn push_interior(layout: &Layout, u: &mut DVector<f64>) {
    let worst = layout
        .blocks
        .iter()
        .map(|&(st, d)| -min_eig(&u.as_slice()[st..st + d]))
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = u.amax().max(1.0);
    if worst >= -1e-8 * scale {
        *u += layout.unit() * (1.0 + worst);
    }
}

fn blockwise<F: Fn(&[f64], &[f64], &mut [f64])>(layout: &Layout, a: &DVector<f64>, b: &DVector<f64>, f: F) -> DVector<f64> {
    let mut out = DVector::zeros(layout.m);
    for &(st, d) in &layout.blocks {
        f(&a.as_slice()[st..st + d], &b.as_slice()[st..st + d], &mut out.as_mut_slice()[st..st + d]);
    }
    out
}

struct Data {
    g: DMatrix<f64>,
    g_abs: DMatrix<f64>,
    h: DVector<f64>,
    c: DVector<f64>,
    h_norm: f64,
    c_norm: f64,
}

impl Data {
    /// Residuals of the iterate, each relative to the floating-point scale of
    /// the sums that form it (`|G| |x|`, `|G|^T |z|`), so that cancellation
    /// among large terms is not mistaken for lack of convergence.
    fn residuals(&self, x: &DVector<f64>, s: &DVector<f64>, z: &DVector<f64>, tau: f64) -> Residuals {
        let gtz = self.g.transpose() * z;
        let gx = &self.g * x;
        let rx = &gtz + &self.c * tau;
        let rz = &gx + s - &self.h * tau;
        let pcost = self.c.dot(x) / tau;
        let dcost = -self.h.dot(z) / tau;
        let sz = s.dot(z);
        Residuals {
            primal_res: rz.norm() / tau / self.h_norm.max((&self.g_abs * x.abs()).norm() / tau).max(s.norm() / tau),
            dual_res: rx.norm() / tau / self.c_norm.max((self.g_abs.transpose() * z.abs()).norm() / tau),
            gap: (sz / (tau * tau)).max((pcost - dcost).abs()) / (1.0 + pcost.abs()),
        }
    }
}

struct Direction {
    x: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

/// Solves `problem` to relative accuracy `tol` in at most `max_iter` iterations.
pub fn solve(problem: &SocpProblem, tol: f64, max_iter: usize) -> Result<SocpSolution> {
    problem.validate()?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Usage(format!("tolerance must be > 0, got {tol}")));
    }
    let layout = Layout::new(problem);
    let n = problem.n_vars;
    let m = layout.m;
    let c = problem.objective.clone();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    for (cone, &(st, d)) in problem.cones.iter().zip(&layout.blocks) {
        for r in 0..d {
            let i = st + Layout::internal_row(r, d);
            for j in 0..n {
                g[(i, j)] = -cone.matrix[(r, j)];
            }
            h[i] = cone.offset[r];
        }
    }
    let degree = problem.cones.len() as f64;
    let h_norm = h.norm().max(1.0);
    let c_norm = c.norm().max(1.0);

    if m == 0 {
        // Unconstrained: bounded only if c = 0.
        let status = if c.amax() == 0.0 {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unbounded
        };
        let primal = if status == SolveStatus::Optimal {
            DVector::zeros(n)
        } else {
            -&c / c.norm_squared()
        };
        return Ok(SocpSolution {
            status,
            objective_value: if status == SolveStatus::Optimal { 0.0 } else { f64::NEG_INFINITY },
            primal,
            duals: Vec::new(),
            residuals: Residuals::default(),
            iterations: 0,
        });
    }

    // Initial point from two least-squares problems with W = I.
    let w = Scalings::identity(&layout);
    let kkt = KktSolver::new(&layout, &g, &w)?;
    let (mut x, neg_s) = kkt.solve(&layout, &w, &DVector::zeros(n), &h);
    let mut s = -neg_s;
    let (_, mut z) = kkt.solve(&layout, &w, &(-&c), &DVector::zeros(m));
    push_interior(&layout, &mut s);
    push_interior(&layout, &mut z);
    let (mut tau, mut kappa) = (1.0, 1.0);

    let mut iterations = 0;
    let mut residuals;
    let mut status = SolveStatus::MaxIter;
    // Best iterate seen so far, restored if the method stalls or breaks down.
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>, f64, f64)> = None;
    let data = Data {
        g: g.clone(),
        g_abs: g.abs(),
        h: h.clone(),
        c: c.clone(),
        h_norm,
        c_norm,
    };

    loop {
        let gtz = g.transpose() * &z;
        let gx = &g * &x;
        let rx = &gtz + &c * tau;
        let rz = &gx + &s - &h * tau;
        let cx = c.dot(&x);
        let hz = h.dot(&z);
        let rt = kappa + cx + hz;
        let sz = s.dot(&z);
        let mu = (sz + tau * kappa) / (degree + 1.0);

        residuals = data.residuals(&x, &s, &z, tau);
        if residuals.primal_res <= tol && residuals.dual_res <= tol && residuals.gap <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        if hz < 0.0 && tau < kappa && gtz.norm() / -hz <= tol {
            status = SolveStatus::Infeasible;
            break;
        }
        if cx < 0.0 && tau < kappa && (&gx + &s).norm() / -cx <= tol {
            status = SolveStatus::Unbounded;
            break;
        }
        let merit = residuals.primal_res.max(residuals.dual_res).max(residuals.gap);
        if !(mu.is_finite() && tau.is_finite() && merit.is_finite()) {
            break;
        }
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), s.clone(), z.clone(), tau, kappa));
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let w = Scalings::new(&layout, &s, &z);
        let lambda = w.apply(&layout, &z, false);
        let kkt = match KktSolver::new(&layout, &g, &w) {
            Ok(k) => k,
            Err(_) => break,
        };
        let (x1, z1) = kkt.solve(&layout, &w, &(-&c), &h);
        let denom_base = c.dot(&x1) + h.dot(&z1);

        // Solves the linearized embedding for a given centering sigma and
        // complementarity targets (xi, xi_tau).
        let direction = |sigma: f64, xi: &DVector<f64>, xi_tau: f64| -> Direction {
            let lam_div = blockwise(&layout, &lambda, xi, jdiv);
            let w_lam_div = w.apply(&layout, &lam_div, false);
            let b1 = &rx * -(1.0 - sigma);
            let b2 = &rz * -(1.0 - sigma) - &w_lam_div;
            let b3 = -(1.0 - sigma) * rt - xi_tau / tau;
            let (x2, z2) = kkt.solve(&layout, &w, &b1, &b2);
            let dtau = (b3 - c.dot(&x2) - h.dot(&z2)) / (denom_base - kappa / tau);
            let dx = x2 + &x1 * dtau;
            let dz = z2 + &z1 * dtau;
            let w2dz = w.apply(&layout, &w.apply(&layout, &dz, false), false);
            let ds = w_lam_div - w2dz;
            let dkappa = (xi_tau - kappa * dtau) / tau;
            Direction { x: dx, z: dz, s: ds, tau: dtau, kappa: dkappa }
        };
        let step = |d: &Direction| -> f64 {
            cone_step(&layout, &s, &d.s)
                .min(cone_step(&layout, &z, &d.z))
                .min(scalar_step(tau, d.tau))
                .min(scalar_step(kappa, d.kappa))
        };

        // Predictor.
        let lam_sq = blockwise(&layout, &lambda, &lambda, jprod);
        let aff = direction(0.0, &(-&lam_sq), -tau * kappa);
        let alpha_aff = step(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

        // Corrector with second-order term.
        let ws = w.apply(&layout, &aff.s, true);
        let wz = w.apply(&layout, &aff.z, false);
        let cross = blockwise(&layout, &ws, &wz, jprod);
        let xi = -lam_sq + layout.unit() * (sigma * mu) - cross;
        let xi_tau = -tau * kappa + sigma * mu - aff.tau * aff.kappa;
        let d = direction(sigma, &xi, xi_tau);
        let alpha = (STEP_FRACTION * step(&d)).min(1.0);

        x += &d.x * alpha;
        z += &d.z * alpha;
        s += &d.s * alpha;
        tau += alpha * d.tau;
        kappa += alpha * d.kappa;
    }

    if status == SolveStatus::MaxIter {
        if let Some((_, bx, bs, bz, bt, _)) = best {
            residuals = data.residuals(&bx, &bs, &bz, bt);
            (x, z, tau) = (bx, bz, bt);
        }
    }

    let to_user = |v: &DVector<f64>, scale: f64| -> Vec<DVector<f64>> {
        layout
            .blocks
            .iter()
            .map(|&(st, d)| DVector::from_fn(d, |r, _| v[st + Layout::internal_row(r, d)] * scale))
            .collect()
    };
    let (primal, duals, objective_value) = match status {
        SolveStatus::Infeasible => {
            let k = 1.0 / -h.dot(&z);
            (DVector::zeros(n), to_user(&z, k), f64::INFINITY)
        }
        SolveStatus::Unbounded => {
            let k = 1.0 / -c.dot(&x);
            (&x * k, to_user(&z, 0.0), f64::NEG_INFINITY)
        }
        _ => (&x / tau, to_user(&z, 1.0 / tau), c.dot(&x) / tau),
    };
    Ok(SocpSolution {
        status,
        primal,
        duals,
        objective_value,
        residuals,
        iterations,
    })
}
