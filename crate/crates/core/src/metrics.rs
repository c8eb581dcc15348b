//! Performance measures: transportation distance between mixing
//! distributions, misclassification rate after label alignment, and ARI.

use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::gaussian::{ground_distance_with_roots, kl_unchecked};
use crate::mixture::MixingDistribution;
use crate::ot::{solve_ot, CostMatrix};

/// Hard partition of `N` units into `K` clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
}

impl Clustering {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {l} outside [0, {k})"
            )));
        }
        Ok(Self { labels, k })
    }

    /// Uses `max label + 1` as the number of clusters.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Transportation distance with ground cost
/// `‖μ_i − μ_γ‖₂ + ‖Σ_i^{1/2} − Σ_γ^{1/2}‖_F` and both marginals fixed.
pub fn w1_distance(g_hat: &MixingDistribution, g_star: &MixingDistribution) -> Result<f64> {
    if g_hat.dim() != g_star.dim() {
        return Err(Error::DimensionMismatch {
            expected: g_star.dim(),
            got: g_hat.dim(),
        });
    }
    let roots_hat = g_hat
        .components()
        .iter()
        .map(|g| g.sqrt_cov())
        .collect::<Result<Vec<_>>>()?;
    let roots_star = g_star
        .components()
        .iter()
        .map(|g| g.sqrt_cov())
        .collect::<Result<Vec<_>>>()?;
    let cost = CostMatrix::from_fn(g_hat.order(), g_star.order(), |i, j| {
        Ok(ground_distance_with_roots(
            &g_hat.components()[i],
            &roots_hat[i],
            &g_star.components()[j],
            &roots_star[j],
        ))
    })?;
    Ok(solve_ot(&cost, g_hat.weights(), g_star.weights())?
        .objective
        .max(0.0))
}

/// Minimum-cost perfect assignment on a square cost table (Hungarian
/// algorithm with potentials). Returns `assignment[row] = col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials over rows (u) and columns (v); p[j] = row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Matches each true component `k` to the estimated component `σ(k)`
/// minimizing `Σ_k KL(Φ*_k ‖ Φ̂_σ(k))`.
pub fn align_labels(g_hat: &MixingDistribution, g_star: &MixingDistribution) -> Result<Vec<usize>> {
    if g_hat.order() != g_star.order() {
        return Err(Error::InvalidArgument(format!(
            "cannot align orders {} and {}",
            g_hat.order(),
            g_star.order()
        )));
    }
    if g_hat.dim() != g_star.dim() {
        return Err(Error::DimensionMismatch {
            expected: g_star.dim(),
            got: g_hat.dim(),
        });
    }
    let cost: Vec<Vec<f64>> = g_star
        .components()
        .iter()
        .map(|t| {
            g_hat
                .components()
                .iter()
                .map(|e| kl_unchecked(t, e))
                .collect()
        })
        .collect();
    Ok(hungarian(&cost))
}

/// Fraction of points whose classification under `g_hat` differs from the
/// aligned true label `alignment[k_i]`.
pub fn misclassification_rate(
    g_hat: &MixingDistribution,
    sample: &LabeledSample,
    alignment: &[usize],
) -> Result<f64> {
    let labels = sample
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("misclassification rate needs true labels".into()))?;
    let pred = g_hat.classify_all(&sample.points)?;
    let mut wrong = 0usize;
    for (&truth, &p) in labels.iter().zip(&pred) {
        let mapped = *alignment
            .get(truth)
            .ok_or_else(|| Error::InvalidArgument(format!("label {truth} has no alignment")))?;
        if mapped != p {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / labels.len().max(1) as f64)
}

fn choose2(n: u64) -> i128 {
    let n = i128::from(n);
    n * (n - 1) / 2
}

/// Adjusted Rand index from the pair-counting contingency table.
///
/// With `I = Σ C(N_ij,2)`, `R = Σ C(N_i·,2)`, `C = Σ C(N_·j,2)` and `T = C(N,2)`,
/// the paper's ratio `(I − RC/T) / (½(R+C) − RC/T)` is multiplied through by
/// `2T` so every term is an exact integer and only the final division rounds.
pub fn ari(a: &Clustering, b: &Clustering) -> Result<f64> {
    if a.labels.len() != b.labels.len() {
        return Err(Error::DimensionMismatch {
            expected: a.labels.len(),
            got: b.labels.len(),
        });
    }
    let n = a.labels.len() as u64;
    let mut table = vec![0u64; a.k * b.k];
    let mut rows = vec![0u64; a.k];
    let mut cols = vec![0u64; b.k];
    for (&i, &j) in a.labels.iter().zip(&b.labels) {
        table[i * b.k + j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    let index: i128 = table.iter().map(|&c| choose2(c)).sum();
    let sum_rows: i128 = rows.iter().map(|&c| choose2(c)).sum();
    let sum_cols: i128 = cols.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let numer = 2 * total * index - 2 * sum_rows * sum_cols;
    let denom = total * (sum_rows + sum_cols) - 2 * sum_rows * sum_cols;
    if denom == 0 {
        // Both partitions are trivial in the same way.
        return Ok(1.0);
    }
    Ok(numer as f64 / denom as f64)
}
