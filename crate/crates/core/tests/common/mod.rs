//! Random instance builders shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scgmm::{Gaussian, MixingDistribution};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SPD matrix `A Aᵀ/d + 0.1 I` with `A` uniform on [-1, 1].
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Gaussian {
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
    Gaussian::new(mean, random_spd(rng, d)).unwrap()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // absorb rounding so the simplex check at 1e-12 always passes
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - head;
    w
}

pub fn random_mixture(rng: &mut ChaCha8Rng, k: usize, d: usize) -> MixingDistribution {
    let comps = (0..k).map(|_| random_gaussian(rng, d)).collect();
    MixingDistribution::new(random_simplex(rng, k), comps).unwrap()
}

/// Explicit-inverse Gaussian log-density, independent of the Cholesky path.
pub fn naive_log_density(g: &Gaussian, x: &[f64]) -> f64 {
    let d = g.dim();
    let inv = g.cov().clone().try_inverse().unwrap();
    let diff = DVector::from_column_slice(x) - g.mean();
    let q = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + g.cov().determinant().ln() + q)
}

/// Textbook KL(p‖q) via explicit inverse and determinants.
pub fn naive_kl(p: &Gaussian, q: &Gaussian) -> f64 {
    let d = p.dim() as f64;
    let qi = q.cov().clone().try_inverse().unwrap();
    let diff = q.mean() - p.mean();
    0.5 * ((&qi * p.cov()).trace() + (diff.transpose() * &qi * &diff)[(0, 0)] - d
        + (q.cov().determinant() / p.cov().determinant()).ln())
}

/// Brute-force OT oracle: enumerate every set of n+m−1 cells, solve the
/// marginal equations restricted to that set, keep the feasible vertices.
pub fn ot_vertex_enumeration(cost: &[Vec<f64>], w: &[f64], v: &[f64]) -> f64 {
    let (n, m) = (w.len(), v.len());
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let size = n + m - 1;
    // drop the last column constraint (it is implied by the others)
    let rhs = DVector::from_iterator(size, w.iter().chain(&v[..m - 1]).copied());
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..size).collect();
    loop {
        let a = DMatrix::<f64>::from_fn(size, size, |r, c| {
            let (i, j) = cells[subset[c]];
            let hit = if r < n { i == r } else { j == r - n };
            if hit {
                1.0
            } else {
                0.0
            }
        });
        let lu = a.lu();
        if lu.determinant().abs() > 1e-9 {
            if let Some(x) = lu.solve(&rhs) {
                if x.iter().all(|&t| t >= -1e-12) {
                    let obj: f64 = subset
                        .iter()
                        .zip(x.iter())
                        .map(|(&c, &t)| cost[cells[c].0][cells[c].1] * t)
                        .sum();
                    best = best.min(obj);
                }
            }
        }
        // next combination in lexicographic order
        let total = cells.len();
        let mut idx = size;
        loop {
            if idx == 0 {
                return best;
            }
            idx -= 1;
            if subset[idx] < total - size + idx {
                break;
            }
        }
        subset[idx] += 1;
        for t in idx + 1..size {
            subset[t] = subset[t - 1] + 1;
        }
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Relative-slack monotonicity check: `next ≤ prev + slack·max(1, |prev|)`.
pub fn non_increasing(trace: &[f64], skip: &[usize], slack: f64) -> Result<(), String> {
    for t in 1..trace.len() {
        if skip.contains(&t) {
            continue;
        }
        let (prev, next) = (trace[t - 1], trace[t]);
        if next > prev + slack * prev.abs().max(1.0) {
            return Err(format!("step {t}: {prev} -> {next}"));
        }
    }
    Ok(())
}
