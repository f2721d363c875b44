use proptest::prelude::*;

use super::*;
use crate::eval::{assign_symbols, build_scenario, db_to_linear, gen_channels};
use crate::model::{ci_holds, make_constellation};
use crate::prob::radius;

fn qpsk_single(gamma: f64) -> Scenario {
    let u = UserScenario::new(vec![C64::new(1.0, 0.0)], C64::new(1.0, 0.0), 1.0, gamma, 0.9, vec![0.0]).unwrap();
    Scenario::new(vec![u], make_constellation(4).unwrap()).unwrap()
}

/// M = N = 4, 8PSK, unit noise, error variance 0.02, p_hat = 0.9.
fn reference(seed: u64, gamma_db: f64) -> Scenario {
    let k = make_constellation(8).unwrap();
    let ch = gen_channels(4, 4, 1, seed).remove(0);
    let sym = assign_symbols(&k, 4, seed);
    build_scenario(&ch, &sym, &k, 1.0, 0.02, db_to_linear(gamma_db), 0.9).unwrap()
}

/// First `n` seeds whose sphere-bounding problem is feasible.
fn feasible_reference(n: usize, gamma_db: f64) -> Vec<Scenario> {
    (0..)
        .map(|s| reference(s, gamma_db))
        .filter(|s| solve_sphere_bounding(s).unwrap().is_optimal())
        .take(n)
        .collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn problem_shape() {
    let s = reference(1, 10.0);
    let p = build_power_min(&s, &[1.0; 4]).unwrap();
    assert_eq!(p.n_vars, 9);
    assert_eq!(p.cones.len(), 9);
    assert!(p.cones.iter().all(|c| c.rows() == 9));
    assert!(build_power_min(&s, &[1.0; 3]).is_err());
    assert!(build_power_min(&s, &[1.0, -1.0, 1.0, 1.0]).is_err());
    assert!(build_power_min(&s, &[1.0, f64::NAN, 1.0, 1.0]).is_err());
}

#[test]
fn zero_radius_is_halfplane() {
    let s = reference(2, 10.0);
    let p = build_power_min(&s, &[0.0; 4]).unwrap();
    for (k, c) in p.cones.iter().enumerate().skip(1) {
        let rows = c.rows();
        assert!(c.matrix.rows(0, rows - 1).iter().all(|v| *v == 0.0), "cone {k}");
        let user = (k - 1) / 2;
        let cone = &s.cones()[user];
        let a = if k % 2 == 1 { &cone.a_minus } else { &cone.a_plus };
        for (j, v) in a.iter().enumerate() {
            assert_eq!(c.matrix[(rows - 1, j)], *v);
        }
        assert!((c.offset[rows - 1] + s.users()[user].margin()).abs() < 1e-15);
    }
}

#[test]
fn single_user_qpsk_matches_hand_built_problem() {
    let s = qpsk_single(1.0);
    let p = build_power_min(&s, &[0.0]).unwrap();
    // Last rows of the two user cones are x1 - x2 >= 1 and x1 + x2 >= 1.
    let minus = &p.cones[1];
    let plus = &p.cones[2];
    let last = |c: &crate::socp::AffineCone| (c.matrix.row(c.rows() - 1).iter().copied().collect::<Vec<_>>(), c.offset[c.rows() - 1]);
    let (rm, om) = last(minus);
    let (rp, op) = last(plus);
    for (got, want) in rm.iter().zip([1.0, -1.0, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    for (got, want) in rp.iter().zip([1.0, 1.0, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert_eq!((om, op), (-1.0, -1.0));
    let r = solve_nonrobust(&s).unwrap();
    assert!((r.power.unwrap() - 1.0).abs() < 1e-6);
    let x = r.x.unwrap();
    assert!((x[0] - C64::new(1.0, 0.0)).norm() < 1e-6);
}

#[test]
fn zero_target_needs_no_power() {
    let s = reference(3, 10.0).with_gamma_hat(0.0).unwrap();
    let r = solve_nonrobust(&s).unwrap();
    assert!(r.is_optimal());
    assert!(r.power.unwrap() < 1e-8);
}

#[test]
fn power_matches_vector_norms() {
    for s in feasible_reference(5, 10.0) {
        for r in [solve_nonrobust(&s).unwrap(), solve_sphere_bounding(&s).unwrap()] {
            let p = r.power.unwrap();
            let xt = r.x_tilde.as_ref().unwrap();
            let x = r.x.as_ref().unwrap();
            assert!((p - dot(xt, xt)).abs() <= 1e-9 * (1.0 + p));
            assert!((p - crate::model::transmit_power(x)).abs() <= 1e-9 * (1.0 + p));
        }
    }
}

#[test]
fn nonrobust_power_grows_with_target() {
    let base = reference(4, 0.0);
    let mut last = 0.0;
    for db in [-5.0, 0.0, 5.0, 10.0, 20.0] {
        let r = solve_nonrobust(&base.with_gamma_hat(db_to_linear(db)).unwrap()).unwrap();
        let p = r.power.unwrap();
        assert!(p >= last * (1.0 - 1e-7), "{db}: {p} < {last}");
        last = p;
    }
}

#[test]
fn sphere_power_grows_with_probability_target() {
    let s = feasible_reference(1, 10.0).remove(0);
    let mut last = 0.0;
    for p_hat in [0.0, 0.3, 0.6, 0.8, 0.9] {
        let r = solve_sphere_bounding(&s.with_p_hat(p_hat).unwrap()).unwrap();
        let p = r.power.unwrap();
        assert!(p >= last * (1.0 - 1e-7), "{p_hat}: {p} < {last}");
        last = p;
    }
}

#[test]
fn guarantee_and_subset_ordering() {
    for s in feasible_reference(25, 10.0) {
        let sb = solve_sphere_bounding(&s).unwrap();
        let nr = solve_nonrobust(&s).unwrap();
        for u in &sb.per_user {
            assert!(u.p_exact >= 0.9 - 1e-6, "{}", u.p_exact);
            assert!((u.radius_used - radius(0.9).unwrap()).abs() < 1e-15);
        }
        assert!(nr.power.unwrap() <= sb.power.unwrap() * (1.0 + 1e-7));
        assert!(max_violation(&s, &[radius(0.9).unwrap(); 4], sb.x_tilde.as_ref().unwrap()) <= 0.0);
    }
}

#[test]
fn zero_probability_target_is_nonrobust() {
    let s = reference(5, 10.0).with_p_hat(0.0).unwrap();
    let a = solve_sphere_bounding(&s).unwrap();
    let b = solve_nonrobust(&s).unwrap();
    assert_eq!(a.x_tilde, b.x_tilde);
}

#[test]
fn zero_error_reduces_to_nonrobust() {
    let k = make_constellation(8).unwrap();
    let ch = gen_channels(4, 4, 1, 9).remove(0);
    let sym = assign_symbols(&k, 4, 9);
    let s = build_scenario(&ch, &sym, &k, 1.0, 0.0, 10.0, 0.95).unwrap();
    let a = solve_sphere_bounding(&s).unwrap();
    let b = solve_nonrobust(&s).unwrap();
    let (xa, xb) = (a.x_tilde.unwrap(), b.x_tilde.unwrap());
    for (u, v) in xa.iter().zip(&xb) {
        assert!((u - v).abs() < 1e-12);
    }
    // Without error the solved constraints hold deterministically.
    assert!(a.per_user.iter().all(|u| u.p_exact == 1.0));
    let x = unlift_vector(&xa);
    for u in s.users() {
        assert!(ci_holds(u.h_est(), u.d(), &x, u.gamma_hat(), u.sigma_z(), k.theta()).unwrap());
    }
}

#[test]
fn infeasible_reports_certificate() {
    // Two users with the same channel but different symbols cannot both be
    // pushed into their own sectors.
    let k = make_constellation(4).unwrap();
    let h = vec![C64::new(1.0, 0.0), C64::new(0.5, -0.2)];
    let users = [0usize, 2]
        .iter()
        .map(|&i| UserScenario::new(h.clone(), k.symbol(i), 1.0, 1.0, 0.5, vec![0.01; 2]).unwrap())
        .collect();
    let s = Scenario::new(users, k).unwrap();
    for r in [solve_nonrobust(&s).unwrap(), solve_sphere_bounding(&s).unwrap()] {
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.x.is_none() && r.power.is_none());
        assert!(r.certificate.is_some());
    }
}

#[test]
fn bpsk_and_mixed_antennas_are_rejected() {
    let u = UserScenario::new(vec![C64::new(1.0, 0.0)], C64::new(1.0, 0.0), 1.0, 1.0, 0.5, vec![0.0]).unwrap();
    assert!(matches!(
        Scenario::new(vec![u.clone()], make_constellation(2).unwrap()),
        Err(Error::Config(_))
    ));
    let v = UserScenario::new(vec![C64::new(1.0, 0.0); 2], C64::new(1.0, 0.0), 1.0, 1.0, 0.5, vec![0.0; 2]).unwrap();
    assert!(Scenario::new(vec![u, v], make_constellation(4).unwrap()).is_err());
    assert!(Scenario::new(vec![], make_constellation(4).unwrap()).is_err());
}

#[test]
fn target_update_arithmetic() {
    // Over-satisfaction by 0.05 with step 0.2.
    assert!((update_target(0.9, 0.05, 0.2, RelaxationUpdate::Negated) - 0.91).abs() < 1e-15);
    assert!((update_target(0.9, 0.05, 0.2, RelaxationUpdate::Relax) - 0.89).abs() < 1e-15);
    assert_eq!(update_target(0.9, 0.0, 0.2, RelaxationUpdate::Relax), 0.9);
    assert_eq!(update_target(0.999, 0.5, 0.2, RelaxationUpdate::Negated), P_ADJ_MAX);
    assert_eq!(update_target(0.01, 0.5, 0.2, RelaxationUpdate::Relax), 0.0);
}

#[test]
fn iteration_stops_at_first_pass_when_already_on_target() {
    // No error: achieved probability is exactly 1, so with p_hat close to 1
    // the first pass already meets the stopping rule.
    let k = make_constellation(8).unwrap();
    let ch = gen_channels(4, 4, 1, 9).remove(0);
    let sym = assign_symbols(&k, 4, 9);
    let s = build_scenario(&ch, &sym, &k, 1.0, 0.0, 10.0, 0.999).unwrap();
    let r = iterative_sphere_bounding(&s, &IterOptions::default()).unwrap();
    assert_eq!(r.trace.len(), 1);
    assert!(r.converged);
    let rec = &r.trace[0];
    for ((adj, dp), pa) in rec.p_hat_adj.iter().zip(&rec.delta_p).zip(&rec.p_act) {
        assert_eq!(*pa, 1.0);
        assert!((dp - 0.001).abs() < 1e-12);
        assert_eq!(*adj, update_target(0.999, *dp, 0.2, RelaxationUpdate::Relax));
    }
}

#[test]
fn iteration_trace_invariants() {
    for s in feasible_reference(8, 10.0) {
        let opts = IterOptions::default();
        let r = iterative_sphere_bounding(&s, &opts).unwrap();
        assert!(r.is_optimal());
        assert!(!r.trace.is_empty() && r.trace.len() <= opts.max_iter);
        for (i, rec) in r.trace.iter().enumerate() {
            assert_eq!(rec.l, i + 1);
            assert!(rec.p_hat_adj.iter().all(|p| (0.0..1.0).contains(p)));
            for ((dp, pa), u) in rec.delta_p.iter().zip(&rec.p_act).zip(s.users()) {
                assert!((dp - (pa - u.p_hat())).abs() < 1e-15);
            }
        }
        let last = r.trace.last().unwrap();
        let stop = last.delta_p.iter().all(|d| d.abs() <= opts.delta);
        assert_eq!(r.converged, stop);
        assert!(stop || r.trace.len() == opts.max_iter);
        // Final precoder is the one the last record measured.
        for (u, pa) in r.per_user.iter().zip(&last.p_act) {
            assert_eq!(u.p_exact, *pa);
        }
        // Each user either meets its target closely or is over-satisfied
        // with constraints that no longer respond to its adjusted target.
        for (u, adj) in r.per_user.iter().zip(&last.p_hat_adj) {
            assert!((u.p_exact - 0.9).abs() <= 0.02 || (u.p_exact > 0.9 && *adj < 0.9), "{} {}", u.p_exact, adj);
        }
    }
}

#[test]
fn iteration_power_between_schemes() {
    for s in feasible_reference(8, 10.0) {
        let it = iterative_sphere_bounding(&s, &IterOptions::default()).unwrap();
        let sb = solve_sphere_bounding(&s).unwrap();
        let nr = solve_nonrobust(&s).unwrap();
        let p = it.power.unwrap();
        assert!(nr.power.unwrap() <= p * (1.0 + 1e-7));
        assert!(p <= sb.power.unwrap() * (1.0 + 1e-7));
    }
}

#[test]
fn negated_update_drifts_upward() {
    // Feeding over-satisfaction back with a positive sign only tightens.
    let s = feasible_reference(1, 10.0).remove(0);
    let opts = IterOptions {
        update: RelaxationUpdate::Negated,
        ..IterOptions::default()
    };
    let r = iterative_sphere_bounding(&s, &opts).unwrap();
    assert!(!r.converged);
    let first = &r.trace[0].p_hat_adj;
    let last = &r.trace.last().unwrap().p_hat_adj;
    assert!(first.iter().zip(last).all(|(a, b)| b >= a));
    assert!(last.iter().any(|p| *p > 0.95));
}

#[test]
fn monte_carlo_iteration_is_reproducible() {
    let s = feasible_reference(1, 10.0).remove(0);
    let opts = IterOptions {
        prob: ProbMethod::MonteCarlo {
            n_samples: 20_000,
            seed: 5,
        },
        max_iter: 5,
        ..IterOptions::default()
    };
    let a = iterative_sphere_bounding(&s, &opts).unwrap();
    let b = iterative_sphere_bounding(&s, &opts).unwrap();
    assert_eq!(a, b);
    // Sampled and exact achieved probabilities agree at the first pass.
    let exact = iterative_sphere_bounding(&s, &IterOptions { max_iter: 1, ..IterOptions::default() }).unwrap();
    for (m, e) in a.trace[0].p_act.iter().zip(&exact.trace[0].p_act) {
        let se = (e * (1.0 - e) / 20_000.0).sqrt();
        assert!((m - e).abs() <= 4.0 * se + 1e-12, "{m} vs {e}");
    }
}

#[test]
fn iteration_options_are_validated() {
    let s = qpsk_single(1.0);
    for opts in [
        IterOptions { eta: 0.0, ..IterOptions::default() },
        IterOptions { delta: -1.0, ..IterOptions::default() },
        IterOptions { max_iter: 0, ..IterOptions::default() },
        IterOptions { prob: ProbMethod::MonteCarlo { n_samples: 0, seed: 0 }, ..IterOptions::default() },
    ] {
        assert!(matches!(iterative_sphere_bounding(&s, &opts), Err(Error::Config(_))));
    }
}

#[test]
fn maxmin_single_user() {
    let s = qpsk_single(1.0);
    let r = maxmin_snr_lower_bound(&s, 4.0).unwrap();
    assert!((r.gamma_lb.unwrap() - 4.0).abs() < 1e-6);
    assert!((10.0 * r.gamma_lb.unwrap().log10() - 6.0206).abs() < 1e-3);
    let x = r.x.unwrap();
    assert!((crate::model::transmit_power(&x) - 4.0).abs() < 1e-9);
    // Budget equal to the unit-target power leaves the precoder unchanged.
    let p1 = r.power_unit.unwrap();
    let same = maxmin_snr_lower_bound(&s, p1).unwrap();
    assert!((same.gamma_lb.unwrap() - 1.0).abs() < 1e-12);
    let unit = solve_sphere_bounding(&s).unwrap();
    assert_eq!(same.x_tilde.unwrap(), unit.x_tilde.unwrap());
    assert!(maxmin_snr_lower_bound(&s, 0.0).is_err());
}

#[test]
fn maxmin_homogeneity() {
    for s in feasible_reference(5, 0.0) {
        let budget = 50.0;
        let r = maxmin_snr_lower_bound(&s, budget).unwrap();
        let g = r.gamma_lb.unwrap();
        let at_g = s.with_gamma_hat(g).unwrap();
        let radii = vec![radius(0.9).unwrap(); 4];
        assert!(max_violation(&at_g, &radii, r.x_tilde.as_ref().unwrap()) <= 1e-9 * budget.sqrt());
        let direct = solve_sphere_bounding(&at_g).unwrap();
        assert!(close(direct.power.unwrap(), budget, 1e-5), "{:?}", direct.power);
    }
}

#[test]
fn maxmin_infeasible_has_no_bound() {
    let k = make_constellation(4).unwrap();
    let h = vec![C64::new(1.0, 0.0)];
    let users = [0usize, 2]
        .iter()
        .map(|&i| UserScenario::new(h.clone(), k.symbol(i), 1.0, 1.0, 0.5, vec![0.0]).unwrap())
        .collect();
    let s = Scenario::new(users, k).unwrap();
    let r = maxmin_snr_lower_bound(&s, 10.0).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.gamma_lb.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaled_precoder_stays_feasible(seed in 0u64..500, alpha in 1.0f64..5.0) {
        let s = reference(seed, 5.0);
        let r = solve_sphere_bounding(&s).unwrap();
        prop_assume!(r.is_optimal());
        let radii = vec![radius(0.9).unwrap(); 4];
        let g = s.users()[0].gamma_hat();
        let scaled: Vec<f64> = r.x_tilde.unwrap().iter().map(|v| v * alpha).collect();
        let bigger = s.with_gamma_hat(alpha * alpha * g).unwrap();
        prop_assert!(max_violation(&bigger, &radii, &scaled) <= 1e-9);
    }

    #[test]
    fn power_is_linear_in_target(seed in 0u64..500, k in 1.5f64..20.0) {
        let s = reference(seed, 0.0);
        let a = solve_sphere_bounding(&s).unwrap();
        prop_assume!(a.is_optimal());
        let b = solve_sphere_bounding(&s.with_gamma_hat(k).unwrap()).unwrap();
        prop_assert!(close(b.power.unwrap(), k * a.power.unwrap(), 1e-6));
    }

    #[test]
    fn power_nondecreasing_in_one_users_target(seed in 0u64..500, user in 0usize..4, step in 0.1f64..3.0) {
        let s = reference(seed, 5.0);
        let a = solve_nonrobust(&s).unwrap();
        prop_assume!(a.is_optimal());
        let mut users = s.users().to_vec();
        users[user] = users[user].with_gamma_hat(users[user].gamma_hat() + step).unwrap();
        let t = Scenario::new(users, s.constellation().clone()).unwrap();
        let b = solve_nonrobust(&t).unwrap();
        prop_assert!(b.power.unwrap() >= a.power.unwrap() * (1.0 - 1e-7));
    }
}
