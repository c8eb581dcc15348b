//! Random Gaussian mixtures with a prescribed maximum pairwise overlap.
//!
//! The overlap `o_{j|i}` is the probability that a draw from component `i`
//! is classified to `j`, estimated by Monte Carlo. Draws are generated from
//! standard normals mapped through each component's Cholesky factor, and the
//! standard normals depend only on `(seed, i, j)`, so the estimate is a
//! deterministic, smooth-ish function of the covariance scale being searched.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::mixture::MixingDistribution;
use crate::rng::{self, tag};

const MAX_STEPS: usize = 60;
/// Search stops once the achieved value is this close (relative) to target.
const SEARCH_REL_TOL: f64 = 0.01;
/// Accepted relative error of the final model.
pub const ACCEPT_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSpec {
    pub d: usize,
    pub k: usize,
    pub max_omega: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl OverlapSpec {
    pub fn new(d: usize, k: usize, max_omega: f64, seed: u64) -> Self {
        Self {
            d,
            k,
            max_omega,
            mc_samples: 100_000,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_omega > 0.0 && self.max_omega < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "max_omega must lie in (0, 1), got {}",
                self.max_omega
            )));
        }
        if self.d == 0 || self.k < 2 {
            return Err(Error::InvalidArgument("need d >= 1 and K >= 2".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidArgument("mc_samples must be positive".into()));
        }
        Ok(())
    }
}

fn standard_draws(seed: u64, from: usize, to: usize, count: usize, d: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[tag::OVERLAP, from as u64, to as u64]);
    (0..count * d).map(|_| r.sample(StandardNormal)).collect()
}

/// Fraction of draws from component `from` with
/// `w_from φ_from(x) < w_to φ_to(x)`.
fn directed_overlap(g: &MixingDistribution, from: usize, to: usize, z: &[f64]) -> f64 {
    let d = g.dim();
    let (src, dst) = (&g.components()[from], &g.components()[to]);
    let (lw_src, lw_dst) = (g.weights()[from].ln(), g.weights()[to].ln());
    let mut x = vec![0.0; d];
    let mut hits = 0usize;
    for zi in z.chunks_exact(d) {
        src.transform_standard(zi, &mut x);
        if lw_src + src.log_density_unchecked(&x) < lw_dst + dst.log_density_unchecked(&x) {
            hits += 1;
        }
    }
    hits as f64 / (z.len() / d) as f64
}

/// Monte Carlo `(o_{j|i}, o_{i|j})` with `mc_samples` draws per direction.
pub fn pairwise_overlap(
    g: &MixingDistribution,
    i: usize,
    j: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if i == j || i >= g.order() || j >= g.order() {
        return Err(Error::InvalidArgument(format!(
            "invalid component pair ({i}, {j})"
        )));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("mc_samples must be positive".into()));
    }
    let d = g.dim();
    let zi = standard_draws(seed, i, j, mc_samples, d);
    let zj = standard_draws(seed, j, i, mc_samples, d);
    Ok((
        directed_overlap(g, i, j, &zi),
        directed_overlap(g, j, i, &zj),
    ))
}

/// Cached standard normals for every ordered pair, reused across scales.
struct OverlapSampler {
    pairs: Vec<(usize, usize, Vec<f64>, Vec<f64>)>,
}

impl OverlapSampler {
    fn new(k: usize, d: usize, mc_samples: usize, seed: u64) -> Self {
        let idx: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .collect();
        let pairs = idx
            .into_par_iter()
            .map(|(i, j)| {
                (
                    i,
                    j,
                    standard_draws(seed, i, j, mc_samples, d),
                    standard_draws(seed, j, i, mc_samples, d),
                )
            })
            .collect();
        Self { pairs }
    }

    fn max_omega(&self, g: &MixingDistribution) -> f64 {
        self.pairs
            .par_iter()
            .map(|(i, j, zi, zj)| directed_overlap(g, *i, *j, zi) + directed_overlap(g, *j, *i, zj))
            .reduce(|| 0.0, f64::max)
    }
}

/// `max_{i<j} (o_{j|i} + o_{i|j})`.
pub fn max_omega(g: &MixingDistribution, mc_samples: usize, seed: u64) -> Result<f64> {
    if g.order() < 2 {
        return Ok(0.0);
    }
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("mc_samples must be positive".into()));
    }
    Ok(OverlapSampler::new(g.order(), g.dim(), mc_samples, seed).max_omega(g))
}

/// Seed used for the overlap estimates of a generated model.
pub fn overlap_seed(spec_seed: u64) -> u64 {
    rng::derive_seed(spec_seed, &[tag::SIMGEN, tag::OVERLAP])
}

#[derive(Debug, Clone)]
pub struct GeneratedModel {
    pub model: MixingDistribution,
    pub scale: f64,
    pub achieved_omega: f64,
    /// `(scale, MaxOmega)` for every evaluated scale, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

fn scaled(base: &MixingDistribution, c: f64) -> Result<MixingDistribution> {
    let comps = base
        .components()
        .iter()
        .map(|g| g.with_scaled_cov(c))
        .collect::<Result<Vec<_>>>()?;
    MixingDistribution::new(base.weights().to_vec(), comps)
}

fn random_base(spec: &OverlapSpec) -> Result<MixingDistribution> {
    let (d, k) = (spec.d, spec.k);
    let mut r = rng::stream(spec.seed, &[tag::SIMGEN]);
    let mut comps = Vec::with_capacity(k);
    for _ in 0..k {
        let mean = DVector::from_fn(d, |_, _| r.random::<f64>());
        let raw = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let q = raw.qr().q();
        let eig = DVector::from_fn(d, |_, _| r.random_range(0.05..=1.0));
        let cov = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        comps.push(Gaussian::new(mean, cov)?);
    }
    // Uniform on the simplex, then squeezed into [1/(2K), 1].
    let e: Vec<f64> = (0..k).map(|_| r.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    let floor = 1.0 / (2.0 * k as f64);
    let weights = e.iter().map(|x| floor + 0.5 * x / total).collect();
    MixingDistribution::new(weights, comps)
}

pub fn generate(spec: &OverlapSpec) -> Result<MixingDistribution> {
    Ok(generate_detailed(spec)?.model)
}

/// Draws a random mixture and searches a global covariance scale `c` so the
/// Monte Carlo MaxOmega hits `spec.max_omega`.
///
/// Means are uniform on the unit hypercube; covariances are `Q diag(λ) Qᵀ`
/// with `Q` a random orthogonal matrix and `λ ~ U[0.05, 1]`; weights are
/// uniform on the simplex shifted to be at least `1/(2K)`.
pub fn generate_detailed(spec: &OverlapSpec) -> Result<GeneratedModel> {
    spec.validate()?;
    let base = random_base(spec)?;
    let sampler = OverlapSampler::new(spec.k, spec.d, spec.mc_samples, overlap_seed(spec.seed));
    let target = spec.max_omega;
    let mut trace = Vec::new();
    let mut eval = |c: f64| -> Result<(MixingDistribution, f64)> {
        let g = scaled(&base, c)?;
        let w = sampler.max_omega(&g);
        trace.push((c, w));
        Ok((g, w))
    };
    let close = |w: f64| (w - target).abs() <= SEARCH_REL_TOL * target;

    // Bracket the target in log-scale, then bisect.
    let mut log_c = 0.0f64;
    let (mut g, mut w) = eval(log_c.exp())?;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best = (g.clone(), w, log_c);
    let mut steps = 1;
    while steps < MAX_STEPS && !close(w) {
        if w < target {
            lo = log_c;
        } else {
            hi = log_c;
        }
        log_c = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => log_c + 2.0,
            (false, true) => log_c - 2.0,
            (false, false) => unreachable!(),
        };
        (g, w) = eval(log_c.exp())?;
        steps += 1;
        if (w - target).abs() < (best.1 - target).abs() {
            best = (g.clone(), w, log_c);
        }
    }
    let (model, achieved, log_c) = best;
    if (achieved - target).abs() > ACCEPT_REL_TOL * target {
        let low = trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        let high = trace.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::OverlapUnreachable { target, low, high });
    }
    Ok(GeneratedModel {
        model,
        scale: log_c.exp(),
        achieved_omega: achieved,
        trace,
    })
}
