//! Transport solvers against a brute-force vertex-enumeration oracle.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use scgmm::{relaxed_plan, solve_ot, CostMatrix};

fn random_instance(seed: u64, n: usize, m: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    // integer-valued costs make ties (degenerate vertices) common
    let integer = r.random_bool(0.5);
    let cost = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if integer {
                        r.random_range(0..4) as f64
                    } else {
                        r.random_range(0.0..5.0)
                    }
                })
                .collect()
        })
        .collect();
    let w = random_simplex(&mut r, n);
    let v = if r.random_bool(0.2) && n == m {
        w.clone()
    } else {
        random_simplex(&mut r, m)
    };
    (cost, w, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn solve_ot_matches_vertex_enumeration(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let (cost, w, v) = random_instance(seed, n, m);
        let plan = solve_ot(&CostMatrix::from_rows(&cost).unwrap(), &w, &v).unwrap();
        let oracle = ot_vertex_enumeration(&cost, &w, &v);
        prop_assert!((plan.objective - oracle).abs() <= 1e-10, "{} vs {oracle}", plan.objective);
        for (a, b) in plan.row_sums().iter().zip(&w) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        for (a, b) in plan.col_sums().iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        prop_assert!(plan.matrix().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn relaxed_plan_is_a_lower_bound_with_exact_rows(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=4) {
        let (cost, w, v) = random_instance(seed, n, m);
        let c = CostMatrix::from_rows(&cost).unwrap();
        let relaxed = relaxed_plan(&c, &w).unwrap();
        let full = solve_ot(&c, &w, &v).unwrap();
        prop_assert!(relaxed.objective <= full.objective + 1e-12);
        for (a, b) in relaxed.row_sums().iter().zip(&w) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// Marginal relaxation (Theorem 1): min over target marginals of the
    /// both-marginal objective equals the relaxed objective.
    #[test]
    fn relaxed_objective_is_min_over_target_marginals(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cost: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| r.random_range(0.0..5.0)).collect()).collect();
        // grid-aligned source marginal so the optimal v is a grid point
        let w0 = r.random_range(1..1000) as f64 / 1000.0;
        let w = [w0, 1.0 - w0];
        let c = CostMatrix::from_rows(&cost).unwrap();
        let relaxed = relaxed_plan(&c, &w).unwrap().objective;
        let best = (0..=1000)
            .map(|t| {
                let v0 = t as f64 / 1000.0;
                solve_ot(&c, &w, &[v0, 1.0 - v0]).unwrap().objective
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!((best - relaxed).abs() <= 1e-6, "{best} vs {relaxed}");
    }
}
