use cbf_lp::lp::{solve_lp, LinearProgram, LpBuilder, LpStatus};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Box-bounded program with a known interior point, so it is feasible and
/// bounded.
fn random_lp(seed: u64, dim: usize, rows: usize, eqs: usize) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y0 = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
    let mut lp = LinearProgram::new(dim);
    lp.cost = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    lp.ineq_matrix = DMatrix::from_fn(rows, dim, |_, _| rng.random_range(-1.0..1.0));
    lp.ineq_rhs = &lp.ineq_matrix * &y0 + DVector::from_fn(rows, |_, _| rng.random_range(0.1..2.0));
    lp.eq_matrix = DMatrix::from_fn(eqs, dim, |_, _| rng.random_range(-1.0..1.0));
    lp.eq_rhs = &lp.eq_matrix * &y0;
    lp.lower = vec![Some(-5.0); dim];
    lp.upper = vec![Some(5.0); dim];
    lp
}

fn feasible(lp: &LinearProgram, y: &DVector<f64>) -> bool {
    lp.max_violation(y) <= 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimum_is_feasible_and_no_sampled_point_beats_it(seed in any::<u64>(), dim in 1usize..6, rows in 0usize..8) {
        let lp = random_lp(seed, dim, rows, 0);
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(sol.max_violation <= 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..500 {
            let y = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
            if feasible(&lp, &y) {
                prop_assert!(lp.cost.dot(&y) >= sol.objective - 1e-6);
            }
        }
        // Rounding the optimum toward a random feasible point stays above it.
        let y = DVector::from_fn(dim, |i, _| (sol.y[i] * 8.0).round() / 8.0);
        if feasible(&lp, &y) {
            prop_assert!(lp.cost.dot(&y) >= sol.objective - 1e-6);
        }
    }

    #[test]
    fn equality_rows_are_met(seed in any::<u64>(), dim in 2usize..6, rows in 0usize..6) {
        let lp = random_lp(seed, dim, rows, 1);
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let r = &lp.eq_matrix * &sol.y - &lp.eq_rhs;
        prop_assert!(r.amax() <= 1e-7);
    }

    #[test]
    fn doubling_cost_keeps_the_argmin(seed in any::<u64>(), dim in 1usize..6, rows in 0usize..8) {
        let lp = random_lp(seed, dim, rows, 0);
        let mut doubled = lp.clone();
        doubled.cost *= 2.0;
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&doubled).unwrap();
        prop_assert!((&a.y - &b.y).amax() <= 1e-7);
        prop_assert!((b.objective - 2.0 * a.objective).abs() <= 1e-7 * (1.0 + a.objective.abs()));
    }

    #[test]
    fn solves_are_deterministic(seed in any::<u64>(), dim in 1usize..6, rows in 0usize..8) {
        let lp = random_lp(seed, dim, rows, 1);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        prop_assert_eq!(a.y.as_slice(), b.y.as_slice());
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}

#[test]
fn small_examples() {
    let mut b = LpBuilder::new(1);
    b.set_cost(0, -1.0);
    b.set_bounds(0, Some(0.0), Some(3.0));
    let s = solve_lp(&b.build()).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.y[0] - 3.0).abs() <= 1e-12 && (s.objective + 3.0).abs() <= 1e-12);

    let mut b = LpBuilder::new(1);
    b.add_le(vec![(0, 1.0)], 1.0);
    b.add_le(vec![(0, -1.0)], -2.0);
    let s = solve_lp(&b.build()).unwrap();
    assert_eq!(s.status, LpStatus::Infeasible);
    let w = s.farkas_witness.unwrap();
    // y <= 1 plus -y <= -2 combine to 0 <= -1.
    assert!(w.iter().all(|v| *v >= -1e-12));
    assert!((w[0] - w[1]).abs() <= 1e-9 && w[0] > 0.0);

    let mut b = LpBuilder::new(1);
    b.set_cost(0, -1.0);
    b.set_bounds(0, Some(0.0), None);
    assert_eq!(solve_lp(&b.build()).unwrap().status, LpStatus::Unbounded);
}

#[test]
fn infeasible_witness_certifies_random_programs() {
    for seed in 0..50u64 {
        let mut lp = random_lp(seed, 3, 4, 0);
        // Two parallel rows pointing apart: a.y <= -1 and -a.y <= -1.
        let a = lp.ineq_matrix.row(0).into_owned();
        lp.ineq_matrix = DMatrix::from_rows(&[a.clone(), -a]);
        lp.ineq_rhs = DVector::from_vec(vec![-1.0, -1.0]);
        lp.lower = vec![None; 3];
        lp.upper = vec![None; 3];
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible, "seed {seed}");
        let w = DVector::from_vec(s.farkas_witness.unwrap());
        assert!(w.min() >= -1e-12);
        let combo = lp.ineq_matrix.transpose() * &w;
        assert!(combo.amax() <= 1e-9 * w.amax());
        assert!(lp.ineq_rhs.dot(&w) < 0.0);
    }
}
