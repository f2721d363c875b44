//! Built-in analytic checks, each reporting its measured error.

use std::f64::consts::PI;

use serde::Serialize;

use crate::eval::{assign_symbols, build_scenario, gen_channels};
use crate::model::{make_constellation, UserScenario, C64};
use crate::precoder::{maxmin_snr_lower_bound, solve_nonrobust, solve_sphere_bounding, Scenario};
use crate::prob::{bvn::bvn_lower, connect_prob_exact, connect_prob_mc, erf, erf_inv, first_tighten_bound, moments, radius};
use crate::socp::{self, kkt_residuals, SocpProblem, SolveStatus};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Error against the reference (or a violation amount).
    pub measured: f64,
    pub tolerance: f64,
}

/// Names of every check, in report order.
pub const CHECKS: [&str; 12] = [
    "erf_reference",
    "erf_inv_0.9",
    "radius_0.9",
    "orthant_closed_form",
    "bvn_reference",
    "socp_qpsk_power",
    "socp_qpsk_kkt",
    "socp_infeasible_certificate",
    "nonrobust_single_user",
    "tightening_chain",
    "homogeneity",
    "exact_vs_monte_carlo",
];

fn qpsk_problem() -> SocpProblem {
    let mut p = SocpProblem::new(vec![0.0, 0.0, 1.0]);
    let eye = [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    // Shapes are fixed here, so construction cannot fail.
    p.add_cone(&eye, vec![0.0; 3]).expect("static problem");
    p.add_cone(&[vec![1.0, -1.0, 0.0]], vec![-1.0]).expect("static problem");
    p.add_cone(&[vec![1.0, 1.0, 0.0]], vec![-1.0]).expect("static problem");
    p
}

fn reference_scenario(gamma: f64) -> Result<Scenario> {
    let k = make_constellation(8)?;
    for seed in 0.. {
        let ch = gen_channels(4, 4, 1, seed).remove(0);
        let s = build_scenario(&ch, &assign_symbols(&k, 4, seed), &k, 1.0, 0.02, gamma, 0.9)?;
        if solve_sphere_bounding(&s)?.is_optimal() {
            return Ok(s);
        }
    }
    unreachable!("seed space is unbounded")
}

/// `(name, measured error, tolerance)`; the check passes when the error is
/// at most the tolerance.
fn measure(name: &str) -> Result<(f64, f64)> {
    Ok(match name {
        "erf_reference" => ((erf(0.5) - 0.520_499_877_813_046_5).abs(), 1e-14),
        "erf_inv_0.9" => ((erf_inv(0.9)? - 1.163_087_153_676_674_3).abs(), 1e-12),
        "radius_0.9" => ((radius(0.9)? - 1.644_853_626_951_472_2).abs(), 1e-12),
        "orthant_closed_form" => {
            let err = [-0.9, -0.5, 0.0, 0.5, 0.9]
                .iter()
                .map(|&r: &f64| (bvn_lower(0.0, 0.0, r) - (0.25 + r.asin() / (2.0 * PI))).abs())
                .fold(0.0, f64::max);
            (err, 1e-8)
        }
        "bvn_reference" => ((bvn_lower(1.0, 1.0, 0.5) - 0.745_203_586_846_75).abs(), 1e-12),
        "socp_qpsk_power" => {
            let sol = socp::solve(&qpsk_problem(), socp::DEFAULT_TOL, socp::DEFAULT_MAX_ITER)?;
            let ok = sol.status == SolveStatus::Optimal;
            (if ok { (sol.objective_value - 1.0).abs() } else { f64::INFINITY }, 1e-6)
        }
        "socp_qpsk_kkt" => {
            let p = qpsk_problem();
            let sol = socp::solve(&p, socp::DEFAULT_TOL, socp::DEFAULT_MAX_ITER)?;
            (kkt_residuals(&p, &sol.primal, &sol.duals)?.max(), 1e-8)
        }
        "socp_infeasible_certificate" => {
            let mut p = SocpProblem::new(vec![1.0]);
            p.add_cone(&[vec![0.0]], vec![-1.0])?;
            let sol = socp::solve(&p, socp::DEFAULT_TOL, socp::DEFAULT_MAX_ITER)?;
            if sol.status != SolveStatus::Infeasible {
                (f64::INFINITY, 0.0)
            } else {
                let hz: f64 = p.cones.iter().zip(&sol.duals).map(|(c, z)| c.offset.dot(z)).sum();
                let gz: f64 = p.cones.iter().zip(&sol.duals).map(|(c, z)| (c.matrix.transpose() * z).amax()).sum();
                ((hz + 1.0).abs().max(gz), 1e-8)
            }
        }
        "nonrobust_single_user" => {
            let one = C64::new(1.0, 0.0);
            let u = UserScenario::new(vec![one], one, 1.0, 1.0, 0.9, vec![0.0])?;
            let s = Scenario::new(vec![u], make_constellation(4)?)?;
            let r = solve_nonrobust(&s)?;
            (r.power.map_or(f64::INFINITY, |p| (p - 1.0).abs()), 1e-6)
        }
        "tightening_chain" => {
            // Worst violation of exact >= bound >= target over the users.
            let s = reference_scenario(10.0)?;
            let r = solve_sphere_bounding(&s)?;
            let x = r.x_tilde.unwrap_or_default();
            let mut worst: f64 = 0.0;
            for (u, c) in s.users().iter().zip(s.cones()) {
                let m = moments(&x, c, u.gamma_hat(), u.sigma_z())?;
                let exact = connect_prob_exact(&m);
                let bound = first_tighten_bound(&m)?;
                worst = worst.max(bound - exact).max(u.p_hat() - bound);
            }
            (worst, 1e-6)
        }
        "homogeneity" => {
            let s = reference_scenario(1.0)?;
            let budget = 40.0;
            let r = maxmin_snr_lower_bound(&s, budget)?;
            let g = r.gamma_lb.unwrap_or(f64::NAN);
            let direct = solve_sphere_bounding(&s.with_gamma_hat(g)?)?;
            let p = direct.power.unwrap_or(f64::NAN);
            ((p - budget).abs() / (1.0 + budget), 1e-5)
        }
        "exact_vs_monte_carlo" => {
            // Distance in standard errors.
            let s = reference_scenario(10.0)?;
            let x = solve_nonrobust(&s)?.x_tilde.unwrap_or_default();
            let (u, c) = (&s.users()[0], &s.cones()[0]);
            let exact = connect_prob_exact(&moments(&x, c, u.gamma_hat(), u.sigma_z())?);
            let mc = connect_prob_mc(&x, c, u.gamma_hat(), u.sigma_z(), 200_000, 99)?;
            let se = (exact * (1.0 - exact) / 200_000.0).sqrt().max(1e-12);
            ((mc.value - exact).abs() / se, 4.0)
        }
        other => unreachable!("unknown check {other}"),
    })
}

/// Runs every check. `perturb` names a check whose measured error is
/// inflated by one unit, to exercise failure reporting.
pub fn run(perturb: Option<&str>) -> Result<Vec<Check>> {
    if let Some(p) = perturb {
        if !CHECKS.contains(&p) {
            return Err(crate::Error::Usage(format!("no self-test check named {p:?}")));
        }
    }
    CHECKS
        .iter()
        .map(|&name| {
            let (mut measured, tolerance) = measure(name)?;
            if perturb == Some(name) {
                measured += 1.0;
            }
            Ok(Check {
                name,
                passed: measured <= tolerance,
                measured,
                tolerance,
            })
        })
        .collect()
}
