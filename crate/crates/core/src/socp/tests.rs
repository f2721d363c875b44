use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn qpsk_example() -> SocpProblem {
    // minimize t  s.t. ||x|| <= t, x1 - x2 >= 1, x1 + x2 >= 1
    let mut p = SocpProblem::new(vec![0.0, 0.0, 1.0]);
    p.add_cone(
        &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        vec![0.0; 3],
    )
    .unwrap();
    p.add_cone(&[vec![1.0, -1.0, 0.0]], vec![-1.0]).unwrap();
    p.add_cone(&[vec![1.0, 1.0, 0.0]], vec![-1.0]).unwrap();
    p
}

/// Random strictly feasible, bounded problem: a known interior point `y0`
/// and a known interior dual so that the objective is a dual combination.
fn random_problem(seed: u64, n: usize, k: usize) -> SocpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cones = Vec::new();
    let mut c = vec![0.0; n];
    for j in 0..k {
        let rows = if j == 0 { n + 1 } else { rng.random_range(1..=4) };
        let m: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut off: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Shift the bound so that the cone value at y0 is interior.
        let val: Vec<f64> = (0..rows)
            .map(|r| m[r].iter().zip(&y0).map(|(a, b)| a * b).sum::<f64>() + off[r])
            .collect();
        let rest: f64 = val[..rows - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        off[rows - 1] += rest - val[rows - 1] + rng.random_range(0.5..2.0);
        // Interior dual.
        let mut z: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zr: f64 = z[..rows - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        z[rows - 1] = zr + rng.random_range(0.2..1.0);
        for (r, row) in m.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                c[i] += v * z[r];
            }
        }
        cones.push((m, off));
    }
    let mut p = SocpProblem::new(c);
    for (m, off) in cones {
        p.add_cone(&m, off).unwrap();
    }
    p
}

#[test]
fn norm_with_lower_bound() {
    // minimize t s.t. ||x|| <= t, x1 >= 1  ->  (1, 0, 1)
    let mut p = SocpProblem::new(vec![0.0, 0.0, 1.0]);
    p.add_cone(
        &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        vec![0.0; 3],
    )
    .unwrap();
    p.add_lower_bound(0, 1.0).unwrap();
    let sol = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    for (got, want) in sol.primal.iter().zip([1.0, 0.0, 1.0]) {
        assert!((got - want).abs() < 1e-6, "{:?}", sol.primal);
    }
    assert!((sol.objective_value - 1.0).abs() < 1e-7);
}

#[test]
fn qpsk_example_primal_and_duals() {
    let p = qpsk_example();
    let sol = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let want = [1.0, 0.0, 1.0];
    for i in 0..3 {
        assert!((sol.primal[i] - want[i]).abs() < 1e-6, "{:?}", sol.primal);
    }
    let z0 = [-1.0, 0.0, 1.0];
    for i in 0..3 {
        assert!((sol.duals[0][i] - z0[i]).abs() < 1e-6, "{:?}", sol.duals[0]);
    }
    assert!((sol.duals[1][0] - 0.5).abs() < 1e-6);
    assert!((sol.duals[2][0] - 0.5).abs() < 1e-6);
    assert!((sol.dual_objective(&p) - 1.0).abs() < 1e-6);
    let r = kkt_residuals(&p, &sol.primal, &sol.duals).unwrap();
    assert!(r.max() < 1e-6, "{r:?}");
}

#[test]
fn infeasible_is_detected() {
    // 0^T y >= 1
    let mut p = SocpProblem::new(vec![1.0, 0.0]);
    p.add_cone(&[vec![0.0, 0.0]], vec![-1.0]).unwrap();
    p.add_cone(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
    let sol = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
    // Certificate: sum h^T z = -1, z in the dual cone.
    let hz: f64 = p.cones.iter().zip(&sol.duals).map(|(c, z)| c.offset.dot(z)).sum();
    assert!((hz + 1.0).abs() < 1e-9);
    assert!(sol.duals[0][0] > 0.0);
}

#[test]
fn unbounded_is_detected() {
    // minimize -y s.t. y >= 0
    let mut p = SocpProblem::new(vec![-1.0]);
    p.add_lower_bound(0, 0.0).unwrap();
    let sol = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Unbounded);
    assert!(sol.primal[0] > 0.0);
}

#[test]
fn max_iter_is_reported() {
    let p = random_problem(3, 5, 4);
    let sol = solve(&p, 1e-14, 2).unwrap();
    assert_eq!(sol.status, SolveStatus::MaxIter);
    assert_eq!(sol.iterations, 2);
}

#[test]
fn rejects_bad_input() {
    let p = SocpProblem::new(vec![]);
    assert!(matches!(solve(&p, 1e-8, 10), Err(Error::Usage(_))));
    let q = qpsk_example();
    assert!(matches!(solve(&q, 0.0, 10), Err(Error::Usage(_))));
    let mut r = SocpProblem::new(vec![1.0]);
    assert!(r.add_cone(&[vec![1.0, 2.0]], vec![0.0]).is_err());
    assert!(r.add_cone(&[vec![1.0]], vec![]).is_err());
    assert!(r.add_lower_bound(1, 0.0).is_err());
}

#[test]
fn deterministic() {
    let p = random_problem(11, 6, 5);
    let a = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let b = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(a, b);
}

#[test]
fn random_problems_satisfy_kkt() {
    for seed in 0..40 {
        let n = 2 + (seed as usize % 7);
        let k = 1 + (seed as usize % 5);
        let p = random_problem(seed, n, k);
        let sol = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        let r = kkt_residuals(&p, &sol.primal, &sol.duals).unwrap();
        assert!(r.max() < 1e-6, "seed {seed}: {r:?}");
        // Weak duality, tight at the optimum.
        let d = sol.dual_objective(&p);
        assert!(d <= sol.objective_value + 1e-7, "seed {seed}");
        assert!((sol.objective_value - d).abs() < 1e-6 * (1.0 + d.abs()));
    }
}

#[test]
fn perturbed_primal_breaks_complementarity() {
    let p = qpsk_example();
    let sol = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let mut y = sol.primal.clone();
    y[0] += 1e-2;
    let r = kkt_residuals(&p, &y, &sol.duals).unwrap();
    assert!(r.complementarity > 1e-3, "{r:?}");
}

#[test]
fn kkt_rejects_wrong_shapes() {
    let p = qpsk_example();
    let y = DVector::zeros(3);
    assert!(matches!(kkt_residuals(&p, &y, &[]), Err(Error::Usage(_))));
    let bad = vec![DVector::zeros(2), DVector::zeros(1), DVector::zeros(1)];
    assert!(matches!(kkt_residuals(&p, &y, &bad), Err(Error::Usage(_))));
    assert!(matches!(
        kkt_residuals(&p, &DVector::zeros(2), &[]),
        Err(Error::Usage(_))
    ));
}

#[test]
fn dump_round_trip() {
    let p = random_problem(5, 4, 3);
    let text = write_dump(&p);
    assert_eq!(parse_dump(&text).unwrap(), p);
    assert!(parse_dump("socp 2 1\n1 2\n").is_err());
    assert!(parse_dump("socp 1 0\n1 2\n").is_err());
    assert!(parse_dump(&format!("{text}extra\n")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positive_row_scaling_keeps_solution(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let p = random_problem(seed, 3, 3);
        let mut q = p.clone();
        q.cones[1].matrix *= scale;
        q.cones[1].offset *= scale;
        let a = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let b = solve(&q, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert_eq!(a.status, SolveStatus::Optimal);
        prop_assert_eq!(b.status, SolveStatus::Optimal);
        prop_assert!((a.objective_value - b.objective_value).abs() < 1e-6 * (1.0 + a.objective_value.abs()));
    }

    #[test]
    fn objective_scaling_is_linear(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let p = random_problem(seed, 4, 2);
        let mut q = p.clone();
        q.objective *= scale;
        let a = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let b = solve(&q, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert!((scale * a.objective_value - b.objective_value).abs() < 1e-6 * (1.0 + b.objective_value.abs()));
    }
}
