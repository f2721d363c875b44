//! CI power-minimization precoders: the non-robust baseline, the
//! sphere-bounding robust design, its relaxation iteration, and the
//! max-min SNR lower bound obtained by rescaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cone_data, dot, norm, real_lift, unlift_vector, ConeData, ErrorMap, PskConstellation, UserScenario, C64};
use crate::par;
use crate::prob::{connect_prob_exact, connect_prob_mc, moments, radius};
use crate::socp::{self, SocpProblem, SolveStatus};

/// Largest adjusted probability target fed to the radius.
pub const P_ADJ_MAX: f64 = 1.0 - 1e-9;

/// A multiuser downlink: one [`UserScenario`] per user, shared antenna count
/// and constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    users: Vec<UserScenario>,
    constellation: PskConstellation,
    cones: Vec<ConeData>,
}

impl Scenario {
    pub fn new(users: Vec<UserScenario>, constellation: PskConstellation) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Usage("scenario needs at least one user".into()));
        }
        let m = users[0].n_antennas();
        if let Some(u) = users.iter().position(|u| u.n_antennas() != m) {
            return Err(Error::Usage(format!(
                "user {u} has {} antennas, user 0 has {m}",
                users[u].n_antennas()
            )));
        }
        let cones = users
            .iter()
            .map(|u| cone_data(&real_lift(u), constellation.theta()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            users,
            constellation,
            cones,
        })
    }

    pub fn users(&self) -> &[UserScenario] {
        &self.users
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn m_antennas(&self) -> usize {
        self.users[0].n_antennas()
    }

    pub fn constellation(&self) -> &PskConstellation {
        &self.constellation
    }

    pub fn cones(&self) -> &[ConeData] {
        &self.cones
    }

    /// Same channels and symbols with every SNR target set to `gamma_hat`.
    pub fn with_gamma_hat(&self, gamma_hat: f64) -> Result<Self> {
        let users = self
            .users
            .iter()
            .map(|u| u.with_gamma_hat(gamma_hat))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            users,
            constellation: self.constellation.clone(),
            cones: self.cones.clone(),
        })
    }

    /// Same channels and symbols with every probability target set to `p_hat`.
    pub fn with_p_hat(&self, p_hat: f64) -> Result<Self> {
        let users = self
            .users
            .iter()
            .map(|u| u.with_p_hat(p_hat))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            users,
            constellation: self.constellation.clone(),
            cones: self.cones.clone(),
        })
    }

    /// Exact connect probability of every user under `x_tilde`.
    pub fn connect_probs(&self, x_tilde: &[f64]) -> Result<Vec<f64>> {
        self.users
            .iter()
            .zip(&self.cones)
            .map(|(u, c)| Ok(connect_prob_exact(&moments(x_tilde, c, u.gamma_hat(), u.sigma_z())?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserOutcome {
    pub p_exact: f64,
    pub p_target_used: f64,
    pub radius_used: f64,
}

/// One pass of the relaxation iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub l: usize,
    pub p_act: Vec<f64>,
    pub delta_p: Vec<f64>,
    /// Adjusted targets after this pass's update.
    pub p_hat_adj: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecodeResult {
    pub status: SolveStatus,
    /// Present only when `status` is optimal.
    pub x_tilde: Option<Vec<f64>>,
    pub x: Option<Vec<C64>>,
    pub power: Option<f64>,
    pub per_user: Vec<UserOutcome>,
    pub trace: Vec<IterRecord>,
    /// Whether the relaxation iteration met its stopping rule.
    pub converged: bool,
    /// Interior-point iterations summed over all solves.
    pub solver_iters: usize,
    /// Farkas certificate (one dual per cone) when infeasible.
    #[serde(skip)]
    pub certificate: Option<Vec<Vec<f64>>>,
}

impl PrecodeResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn scaled_rows(map: &ErrorMap, r: f64) -> Vec<Vec<f64>> {
    map.dense()
        .into_iter()
        .map(|row| row.into_iter().map(|v| v * r).chain([0.0]).collect())
        .collect()
}

/// Power minimization with sphere-bounded CI constraints.
///
/// Variables are `[x~; t]` and the objective is `t`. Cone 0 is `||x~|| <= t`;
/// user `i` contributes `r_i ||D-/+ x~|| <= a-/+^T x~ - sqrt(gamma_i) sigma_z`
/// as two cones of `2M + 1` rows each.
pub fn build_power_min(scenario: &Scenario, radii: &[f64]) -> Result<SocpProblem> {
    build_scaled(scenario, radii, 1.0)
}

/// [`build_power_min`] with every margin divided by `scale`; the solution
/// scales by the same factor.
fn build_scaled(scenario: &Scenario, radii: &[f64], scale: f64) -> Result<SocpProblem> {
    if radii.len() != scenario.n_users() {
        return Err(Error::Usage(format!(
            "{} radii for {} users",
            radii.len(),
            scenario.n_users()
        )));
    }
    if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::Usage(format!("radius must be finite and >= 0, got {r}")));
    }
    let dim = 2 * scenario.m_antennas();
    let n = dim + 1;
    let mut objective = vec![0.0; n];
    objective[dim] = 1.0;
    let mut p = SocpProblem::new(objective);
    let identity: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect();
    p.add_cone(&identity, vec![0.0; n])?;
    for ((user, cone), &r) in scenario.users.iter().zip(&scenario.cones).zip(radii) {
        let margin = user.margin();
        for (a, d) in [(&cone.a_minus, &cone.d_minus), (&cone.a_plus, &cone.d_plus)] {
            let mut rows = scaled_rows(d, r);
            rows.push(a.iter().copied().chain([0.0]).collect());
            let mut offset = vec![0.0; n];
            offset[dim] = -margin / scale;
            p.add_cone(&rows, offset)?;
        }
    }
    Ok(p)
}

/// Largest violation of the sphere-bounded CI constraints at `x_tilde`
/// (nonpositive when feasible).
pub fn max_violation(scenario: &Scenario, radii: &[f64], x_tilde: &[f64]) -> f64 {
    scenario
        .users
        .iter()
        .zip(&scenario.cones)
        .zip(radii)
        .flat_map(|((u, c), r)| {
            [(&c.a_minus, &c.d_minus), (&c.a_plus, &c.d_plus)]
                .map(|(a, d)| r * norm(&d.apply(x_tilde)) - (dot(a, x_tilde) - u.margin()))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Relative margin enforced by [`polish`].
const POLISH_MARGIN: f64 = 1e-10;

/// Scales an interior-point solution up by the smallest factor `k >= 1` that
/// makes every CI constraint hold strictly. The constraints are positively
/// homogeneous in `x~` apart from the fixed margin, so scaling only helps;
/// `k - 1` is of the order of the solver tolerance.
fn polish(scenario: &Scenario, radii: &[f64], x_tilde: &mut [f64]) {
    let mut k: f64 = 1.0;
    for ((u, c), r) in scenario.users.iter().zip(&scenario.cones).zip(radii) {
        let margin = u.margin();
        if margin == 0.0 {
            continue;
        }
        for (a, d) in [(&c.a_minus, &c.d_minus), (&c.a_plus, &c.d_plus)] {
            let slack = dot(a, x_tilde) - r * norm(&d.apply(x_tilde));
            if slack > 0.0 {
                k = k.max(margin * (1.0 + POLISH_MARGIN) / slack);
            }
        }
    }
    if k > 1.0 {
        x_tilde.iter_mut().for_each(|v| *v *= k);
    }
}

struct Solved {
    status: SolveStatus,
    x_tilde: Option<Vec<f64>>,
    iters: usize,
    certificate: Option<Vec<Vec<f64>>>,
}

fn solve_at_radii(scenario: &Scenario, radii: &[f64]) -> Result<Solved> {
    // Solve at unit scale: margins enter linearly, so the optimum for
    // margins m / k is x / k.
    let scale = scenario.users.iter().map(UserScenario::margin).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let p = build_scaled(scenario, radii, scale)?;
    let sol = socp::solve(&p, socp::DEFAULT_TOL, socp::DEFAULT_MAX_ITER)?;
    let dim = 2 * scenario.m_antennas();
    let x_tilde = (sol.status == SolveStatus::Optimal).then(|| {
        let mut x: Vec<f64> = sol.primal.as_slice()[..dim].iter().map(|v| v * scale).collect();
        polish(scenario, radii, &mut x);
        x
    });
    let certificate = (sol.status == SolveStatus::Infeasible)
        .then(|| sol.duals.iter().map(|z| z.iter().map(|v| v / scale).collect()).collect());
    Ok(Solved {
        status: sol.status,
        x_tilde,
        iters: sol.iterations,
        certificate,
    })
}

fn finish(scenario: &Scenario, solved: Solved, targets: &[f64], radii: &[f64]) -> Result<PrecodeResult> {
    let p_exact = match &solved.x_tilde {
        Some(x) => scenario.connect_probs(x)?,
        None => vec![0.0; scenario.n_users()],
    };
    let per_user = p_exact
        .into_iter()
        .zip(targets)
        .zip(radii)
        .map(|((p, &t), &r)| UserOutcome {
            p_exact: p,
            p_target_used: t,
            radius_used: r,
        })
        .collect();
    Ok(PrecodeResult {
        status: solved.status,
        x: solved.x_tilde.as_deref().map(unlift_vector),
        power: solved.x_tilde.as_deref().map(|x| dot(x, x)),
        x_tilde: solved.x_tilde,
        per_user,
        trace: Vec::new(),
        converged: true,
        solver_iters: solved.iters,
        certificate: solved.certificate,
    })
}

/// CI power minimization on the estimated channels, ignoring the error.
pub fn solve_nonrobust(scenario: &Scenario) -> Result<PrecodeResult> {
    let radii = vec![0.0; scenario.n_users()];
    let solved = solve_at_radii(scenario, &radii)?;
    finish(scenario, solved, &radii, &radii)
}

/// Sphere-bounding design with radii from each user's own `p_hat`.
pub fn solve_sphere_bounding(scenario: &Scenario) -> Result<PrecodeResult> {
    let targets: Vec<f64> = scenario.users.iter().map(UserScenario::p_hat).collect();
    solve_with_targets(scenario, &targets)
}

fn solve_with_targets(scenario: &Scenario, targets: &[f64]) -> Result<PrecodeResult> {
    let radii = targets.iter().map(|&p| radius(p)).collect::<Result<Vec<_>>>()?;
    let solved = solve_at_radii(scenario, &radii)?;
    finish(scenario, solved, targets, &radii)
}

/// Direction of the adjusted-target update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationUpdate {
    /// `p' <- p' - eta (p_act - p_hat)`: over-satisfied users get a lower
    /// target, which loosens their constraint.
    #[default]
    Relax,
    /// `p' <- p' + eta (p_act - p_hat)`.
    Negated,
}

impl RelaxationUpdate {
    fn sign(self) -> f64 {
        match self {
            RelaxationUpdate::Relax => -1.0,
            RelaxationUpdate::Negated => 1.0,
        }
    }
}

/// How the achieved probability is measured inside the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum ProbMethod {
    #[default]
    Exact,
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterOptions {
    pub eta: f64,
    pub delta: f64,
    pub max_iter: usize,
    pub update: RelaxationUpdate,
    pub prob: ProbMethod,
}

impl Default for IterOptions {
    fn default() -> Self {
        Self {
            eta: 0.2,
            delta: 0.005,
            max_iter: 50,
            update: RelaxationUpdate::Relax,
            prob: ProbMethod::Exact,
        }
    }
}

impl IterOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if let ProbMethod::MonteCarlo { n_samples: 0, .. } = self.prob {
            return Err(Error::Config("Monte Carlo sample count must be >= 1".into()));
        }
        Ok(())
    }
}

/// One adjusted-target update, clamped to `[0, P_ADJ_MAX]`.
pub fn update_target(p_adj: f64, delta_p: f64, eta: f64, update: RelaxationUpdate) -> f64 {
    (p_adj + update.sign() * eta * delta_p).clamp(0.0, P_ADJ_MAX)
}

fn achieved(scenario: &Scenario, x_tilde: &[f64], method: ProbMethod, l: usize) -> Result<Vec<f64>> {
    match method {
        ProbMethod::Exact => scenario.connect_probs(x_tilde),
        ProbMethod::MonteCarlo { n_samples, seed } => scenario
            .users
            .iter()
            .zip(&scenario.cones)
            .enumerate()
            .map(|(i, (u, c))| {
                let s = par::derive_seed(seed, &[l as u64, i as u64]);
                Ok(connect_prob_mc(x_tilde, c, u.gamma_hat(), u.sigma_z(), n_samples, s)?.value)
            })
            .collect(),
    }
}

/// Relaxation iteration around the sphere-bounding design: re-solves with
/// per-user adjusted targets until every achieved probability is within
/// `delta` of its requirement, or `max_iter` passes have run.
pub fn iterative_sphere_bounding(scenario: &Scenario, opts: &IterOptions) -> Result<PrecodeResult> {
    opts.validate()?;
    let p_hat: Vec<f64> = scenario.users.iter().map(UserScenario::p_hat).collect();
    let mut p_adj = p_hat.clone();
    let mut trace = Vec::new();
    let mut solver_iters = 0;
    for l in 1..=opts.max_iter {
        let mut res = solve_with_targets(scenario, &p_adj)?;
        solver_iters += res.solver_iters;
        res.solver_iters = solver_iters;
        let Some(x_tilde) = res.x_tilde.clone() else {
            res.trace = trace;
            res.converged = false;
            return Ok(res);
        };
        let p_act = achieved(scenario, &x_tilde, opts.prob, l)?;
        let delta_p: Vec<f64> = p_act.iter().zip(&p_hat).map(|(a, p)| a - p).collect();
        for (adj, dp) in p_adj.iter_mut().zip(&delta_p) {
            *adj = update_target(*adj, *dp, opts.eta, opts.update);
        }
        let done = delta_p.iter().all(|d| d.abs() <= opts.delta);
        trace.push(IterRecord {
            l,
            p_act,
            delta_p,
            p_hat_adj: p_adj.clone(),
        });
        if done || l == opts.max_iter {
            res.trace = trace;
            res.converged = done;
            return Ok(res);
        }
    }
    unreachable!("max_iter >= 1 is validated")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxMinResult {
    pub status: SolveStatus,
    /// Minimal power at unit SNR targets.
    pub power_unit: Option<f64>,
    pub gamma_lb: Option<f64>,
    pub x_tilde: Option<Vec<f64>>,
    pub x: Option<Vec<C64>>,
    pub solver_iters: usize,
}

/// Max-min SNR lower bound under a power budget: solve the sphere-bounding
/// problem at unit targets and rescale, using that the minimal power is
/// linear in a common SNR target.
pub fn maxmin_snr_lower_bound(scenario: &Scenario, p_budget: f64) -> Result<MaxMinResult> {
    if !(p_budget.is_finite() && p_budget > 0.0) {
        return Err(Error::Domain(format!("power budget must be > 0, got {p_budget}")));
    }
    let unit = scenario.with_gamma_hat(1.0)?;
    let res = solve_sphere_bounding(&unit)?;
    let Some(x1) = res.x_tilde else {
        return Ok(MaxMinResult {
            status: res.status,
            power_unit: None,
            gamma_lb: None,
            x_tilde: None,
            x: None,
            solver_iters: res.solver_iters,
        });
    };
    let p1 = dot(&x1, &x1);
    if p1 <= 0.0 {
        return Err(Error::Numerical("zero power at unit SNR targets".into()));
    }
    let k = (p_budget / p1).sqrt();
    let x_tilde: Vec<f64> = x1.iter().map(|v| v * k).collect();
    Ok(MaxMinResult {
        status: res.status,
        power_unit: Some(p1),
        gamma_lb: Some(p_budget / p1),
        x: Some(unlift_vector(&x_tilde)),
        x_tilde: Some(x_tilde),
        solver_iters: res.solver_iters,
    })
}

#[cfg(test)]
mod tests;
