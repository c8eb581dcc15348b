//! Property tests for the Gaussian primitives.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use scgmm::{ground_distance, kl_barycenter, kl_divergence, Gaussian};

fn weighted_kl(gs: &[Gaussian], lambdas: &[f64], eta: &Gaussian) -> f64 {
    gs.iter()
        .zip(lambdas)
        .map(|(g, l)| l * kl_divergence(g, eta).unwrap())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kl_is_nonnegative_and_matches_textbook_formula(seed in any::<u64>(), d in 1usize..=5) {
        let mut r = rng(seed);
        let p = random_gaussian(&mut r, d);
        let q = random_gaussian(&mut r, d);
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(kl >= 0.0);
        let naive = naive_kl(&p, &q);
        prop_assert!((kl - naive).abs() <= 1e-8 * naive.abs().max(1.0), "{kl} vs {naive}");
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
        if kl <= 1e-12 {
            prop_assert_eq!(&p, &q);
        }
    }

    #[test]
    fn log_density_matches_explicit_inverse(seed in any::<u64>(), d in 1usize..=6) {
        let mut r = rng(seed);
        let g = random_gaussian(&mut r, d);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
        let fast = g.log_density(&x).unwrap();
        let slow = naive_log_density(&g, &x);
        prop_assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "{fast} vs {slow}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ground_distance_is_symmetric_and_satisfies_triangle(seed in any::<u64>(), d in 1usize..=4) {
        let mut r = rng(seed);
        let (a, b, c) = (random_gaussian(&mut r, d), random_gaussian(&mut r, d), random_gaussian(&mut r, d));
        let ab = ground_distance(&a, &b).unwrap();
        let ba = ground_distance(&b, &a).unwrap();
        let bc = ground_distance(&b, &c).unwrap();
        let ac = ground_distance(&a, &c).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10);
        prop_assert!(ac <= ab + bc + 1e-10);
        prop_assert!(ground_distance(&a, &a).unwrap().abs() <= 1e-10);
    }
}

/// Random local perturbation of `g`: mean shift plus a symmetric covariance
/// shift that keeps the matrix positive definite.
fn perturb(g: &Gaussian, r: &mut rand_chacha::ChaCha8Rng, scale: f64) -> Option<Gaussian> {
    let d = g.dim();
    let mut normal = || -> f64 { StandardNormal.sample(r) };
    let dm = DVector::from_fn(d, |_, _| scale * normal());
    let e = DMatrix::from_fn(d, d, |_, _| scale * normal());
    let cov = g.cov() + (&e + e.transpose()) * 0.5;
    Gaussian::new(g.mean() + dm, cov).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn barycenter_beats_random_perturbations(seed in any::<u64>(), d in 1usize..=4, m in 2usize..=5) {
        let mut r = rng(seed);
        let gs: Vec<Gaussian> = (0..m).map(|_| random_gaussian(&mut r, d)).collect();
        let lambdas = random_simplex(&mut r, m);
        let bar = kl_barycenter(&gs, &lambdas).unwrap();
        let best = weighted_kl(&gs, &lambdas, &bar);
        let mut tried = 0;
        while tried < 1000 {
            let scale = [1e-3, 1e-2, 1e-1][tried % 3];
            if let Some(p) = perturb(&bar, &mut r, scale) {
                tried += 1;
                let val = weighted_kl(&gs, &lambdas, &p);
                prop_assert!(val >= best - 1e-12, "perturbation improved {best} to {val}");
            }
        }
    }
}
