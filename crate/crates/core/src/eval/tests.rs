use super::*;
use crate::model::make_constellation;
use crate::precoder::solve_sphere_bounding;

fn small_config() -> SweepConfig {
    SweepConfig {
        m_antennas: 2,
        n_users: 2,
        mod_order: 4,
        snr_targets_db: vec![0.0, 10.0],
        n_channels: 6,
        n_mc: 2000,
        seed: 17,
        schemes: SchemeId::ALL.to_vec(),
        ..SweepConfig::default()
    }
}

#[test]
fn channel_statistics() {
    let n = 100_000;
    let ch = gen_channels(1, 1, n, 3);
    let v: Vec<C64> = ch.iter().map(|c| c[0][0]).collect();
    let mean: C64 = v.iter().sum::<C64>() / n as f64;
    let bound = 4.0 / (n as f64).sqrt();
    assert!(mean.re.abs() <= bound && mean.im.abs() <= bound, "{mean}");
    let var_re = v.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
    let var_im = v.iter().map(|z| z.im * z.im).sum::<f64>() / n as f64;
    assert!((var_re - 0.5).abs() < 0.025 && (var_im - 0.5).abs() < 0.025);
    assert!((var_re + var_im - 1.0).abs() < 0.05);
    assert_eq!(gen_channels(3, 2, 4, 9), gen_channels(3, 2, 4, 9));
    assert_ne!(gen_channels(3, 2, 4, 9), gen_channels(3, 2, 4, 10));
    let shape = gen_channels(3, 2, 4, 9);
    assert_eq!(shape.len(), 4);
    assert!(shape.iter().all(|c| c.len() == 2 && c.iter().all(|h| h.len() == 3)));
}

#[test]
fn symbol_statistics() {
    let k = make_constellation(8).unwrap();
    let n = 100_000;
    let s = assign_symbols(&k, n, 1);
    let p = 1.0 / 8.0;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for i in 0..8 {
        let f = s.iter().filter(|&&v| v == i).count() as f64 / n as f64;
        assert!((f - p).abs() <= 3.0 * se, "{i}: {f}");
    }
    assert_eq!(assign_symbols(&k, 50, 4), assign_symbols(&k, 50, 4));
    assert!(make_constellation(3).is_err());
}

fn one_scenario(err_var: f64, sigma_z: f64, db: f64) -> Scenario {
    let k = make_constellation(8).unwrap();
    (0..)
        .map(|s| {
            let ch = gen_channels(4, 4, 1, s).remove(0);
            build_scenario(&ch, &assign_symbols(&k, 4, s), &k, sigma_z, err_var, db_to_linear(db), 0.9).unwrap()
        })
        .find(|s| solve_sphere_bounding(s).unwrap().is_optimal())
        .unwrap()
}

#[test]
fn noiseless_ci_precoder_never_errs() {
    // Designed at unit noise, evaluated with the noise scaled to 1e-9.
    let design = one_scenario(0.0, 1.0, 10.0);
    let x = solve_nonrobust(&design).unwrap().x.unwrap();
    let users = design
        .users()
        .iter()
        .map(|u| UserScenario::new(u.h_est().to_vec(), u.d(), 1e-9, 0.0, 0.9, vec![0.0; 4]).unwrap())
        .collect();
    let s = Scenario::new(users, design.constellation().clone()).unwrap();
    for u in evaluate_precoder(&s, &x, 5000, 1).unwrap() {
        assert_eq!(u.ser.value, 0.0);
        assert_eq!(u.connect_mc.value, 1.0);
        assert_eq!(u.p_exact, 1.0);
    }
}

#[test]
fn sampled_connect_matches_exact() {
    let s = one_scenario(0.02, 1.0, 10.0);
    let x = solve_nonrobust(&s).unwrap().x.unwrap();
    let n = 100_000;
    for u in evaluate_precoder(&s, &x, n, 2).unwrap() {
        let se = (u.p_exact * (1.0 - u.p_exact) / n as f64).sqrt();
        assert!((u.connect_mc.value - u.p_exact).abs() <= 4.0 * se, "{u:?}");
    }
}

#[test]
fn zero_precoder_guesses() {
    let s = one_scenario(0.02, 1.0, 10.0);
    let n = 50_000;
    let p = 7.0 / 8.0;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for u in evaluate_precoder(&s, &[C64::new(0.0, 0.0); 4], n, 3).unwrap() {
        assert!((u.ser.value - p).abs() <= 3.0 * se, "{}", u.ser.value);
        assert_eq!(u.connect_mc.value, 0.0);
    }
}

#[test]
fn errors_imply_lost_connection_at_high_target() {
    let s = one_scenario(0.02, 1.0, 20.0);
    let x = solve_sphere_bounding(&s).unwrap().x.unwrap();
    for u in evaluate_precoder(&s, &x, 20_000, 4).unwrap() {
        let se = u.ser.std_err.max(u.connect_mc.std_err);
        assert!(u.ser.value <= 1.0 - u.connect_mc.value + 4.0 * se, "{u:?}");
    }
}

#[test]
fn evaluation_is_reproducible_and_checked() {
    let s = one_scenario(0.02, 1.0, 10.0);
    let x = solve_nonrobust(&s).unwrap().x.unwrap();
    assert_eq!(evaluate_precoder(&s, &x, 3000, 5).unwrap(), evaluate_precoder(&s, &x, 3000, 5).unwrap());
    assert!(evaluate_precoder(&s, &x[..2], 10, 5).is_err());
    assert!(evaluate_precoder(&s, &x, 0, 5).is_err());
}

#[test]
fn error_free_sweep_always_connects() {
    let cfg = SweepConfig {
        err_var: 0.0,
        schemes: vec![SchemeId::Nonrobust],
        ..small_config()
    };
    let rep = run_sweep(&cfg).unwrap();
    for r in &rep.rows {
        assert_eq!(r.outage_rate, 0.0);
        assert_eq!(r.connect_prob_exact_mean, 1.0);
        assert_eq!(r.connect_prob_mc_mean, 1.0);
    }
}

#[test]
fn sweep_is_independent_of_workers() {
    let cfg = small_config();
    let a = par::with_workers(Some(1), || run_sweep(&cfg)).unwrap().unwrap();
    let b = par::with_workers(Some(3), || run_sweep(&cfg)).unwrap().unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(a, b);
}

#[test]
fn csv_layout() {
    let rep = run_sweep(&small_config()).unwrap();
    let csv = rep.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,snr_target_db,connect_prob_exact_mean,connect_prob_mc_mean,connect_prob_mc_stderr,ser_mean,ser_stderr,power_mean,outage_rate,solver_iters_mean"
    );
    assert_eq!(lines.count(), 4 * 2);
    assert!(csv.contains("\nnonrobust,0.0,") && csv.contains("\nmaxmin,10.0,"));
    for r in &rep.rows {
        for p in [r.connect_prob_exact_mean, r.connect_prob_mc_mean, r.outage_rate] {
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(r.ser_mean.is_none_or(|v| (0.0..=1.0).contains(&v)));
        assert!(r.power_mean.is_none_or(|v| v >= 0.0));
    }
    let d = rep.detail(SchemeId::Maxmin, 10.0).unwrap();
    assert!(d.n_feasible == 0 || d.gamma_lb_mean.unwrap() > 0.0);
}

#[test]
fn all_outage_cell_has_no_power_or_ser() {
    let cfg = small_config();
    let rec = CellRecord {
        channel: 0,
        scheme: SchemeId::Sphere,
        snr_target_db: 0.0,
        feasible: false,
        power: None,
        solver_iters: 7,
        outer_iters: 1,
        converged: true,
        gamma_lb: None,
        users: Vec::new(),
    };
    let (row, detail) = aggregate(&cfg, SchemeId::Sphere, 0.0, &[&rec, &rec]);
    assert_eq!(row.outage_rate, 1.0);
    assert_eq!(row.power_mean, None);
    assert_eq!(row.ser_mean, None);
    assert_eq!(row.connect_prob_exact_mean, 0.0);
    assert_eq!(detail.n_feasible, 0);
    assert_eq!(row.solver_iters_mean, 7.0);
}

#[test]
fn config_validation() {
    assert!(SweepConfig::default().validate().is_ok());
    let bad = [
        SweepConfig { schemes: vec![], ..SweepConfig::default() },
        SweepConfig { schemes: vec![SchemeId::Sphere, SchemeId::Sphere], ..SweepConfig::default() },
        SweepConfig { snr_targets_db: vec![], ..SweepConfig::default() },
        SweepConfig { snr_targets_db: vec![1.0, 1.0], ..SweepConfig::default() },
        SweepConfig { n_channels: 0, ..SweepConfig::default() },
        SweepConfig { mod_order: 2, ..SweepConfig::default() },
        SweepConfig { p_hat: 1.0, ..SweepConfig::default() },
        SweepConfig { eta: 0.0, ..SweepConfig::default() },
        SweepConfig { sigma_z: 0.0, ..SweepConfig::default() },
        SweepConfig { err_var: -0.1, ..SweepConfig::default() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
    }
    assert_eq!(SchemeId::parse("iterative").unwrap(), SchemeId::Iterative);
    assert!(SchemeId::parse("ref").is_err());
}
