//! Penalized maximum likelihood for Gaussian mixtures via EM.
//!
//! The penalty `a_n Σ_k [tr(S Σ_k⁻¹) + ln det Σ_k]`, with `S` the sample
//! covariance, keeps every fitted covariance above `{2a/(N+2a)} S` and makes
//! the objective bounded.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::mixture::{log_sum_exp, MixingDistribution};
use crate::rng::{self, tag};

/// `N·w_k` below this triggers reinitialization of component `k` during `fit`.
pub const STARVATION_MASS: f64 = 1e-8;
const UNDERFLOW_MASS: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Independent EM chains from k-means++ seeds; the best final penalized
    /// log-likelihood wins.
    KMeansPlusPlus {
        n_starts: usize,
    },
    Explicit(MixingDistribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmleConfig {
    pub k: usize,
    /// Penalty size `a_n`; `None` means `N^{-1/2}`.
    pub penalty: Option<f64>,
    /// Threshold on the penalized log-likelihood increment divided by `N`.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl PmleConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            penalty: None,
            tol: 1e-6,
            max_iter: 10_000,
            init: Init::KMeansPlusPlus { n_starts: 10 },
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_penalty(mut self, a: f64) -> Self {
        self.penalty = Some(a);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if let Some(a) = self.penalty {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "penalty must be positive, got {a}"
                )));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if let Init::KMeansPlusPlus { n_starts: 0 } = self.init {
            return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PmleResult {
    pub estimate: MixingDistribution,
    /// Penalized log-likelihood of the initial value followed by one entry
    /// per EM iteration.
    pub penalized_loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Trace indices at which a starved component was reinitialized; the
    /// trace may drop at these points.
    pub reseeds: Vec<usize>,
}

/// `a_n Σ_k [tr(S Σ_k⁻¹) + ln det Σ_k]`.
pub fn penalty_term(g: &MixingDistribution, a: f64, s: &DMatrix<f64>) -> Result<f64> {
    let mut total = 0.0;
    for c in g.components() {
        let inv = c
            .cov()
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .inverse();
        total += s.component_mul(&inv.transpose()).sum() + c.log_det();
    }
    Ok(a * total)
}

/// `Σ_i log φ(x_i | G) − a_n Σ_k [tr(S Σ_k⁻¹) + ln det Σ_k]`.
pub fn penalized_loglik(
    g: &MixingDistribution,
    data: &Dataset,
    a: f64,
    s: &DMatrix<f64>,
) -> Result<f64> {
    check_data(g, data, s)?;
    let ll: f64 = data.rows().map(|x| g.log_density_unchecked(x)).sum();
    Ok(ll - penalty_term(g, a, s)?)
}

fn check_data(g: &MixingDistribution, data: &Dataset, s: &DMatrix<f64>) -> Result<()> {
    if data.d() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: data.d(),
        });
    }
    if s.nrows() != data.d() || s.ncols() != data.d() {
        return Err(Error::DimensionMismatch {
            expected: data.d(),
            got: s.nrows(),
        });
    }
    Ok(())
}

/// E-step output: row-major `N × K` responsibilities and `ℓ_n(G)`.
struct Posterior {
    resp: Vec<f64>,
    loglik: f64,
    k: usize,
}

impl Posterior {
    fn masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for row in self.resp.chunks_exact(self.k) {
            for (a, r) in m.iter_mut().zip(row) {
                *a += r;
            }
        }
        m
    }
}

fn e_step(g: &MixingDistribution, data: &Dataset) -> Posterior {
    let k = g.order();
    let rows: Vec<(Vec<f64>, f64)> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let mut terms = g.weighted_log_terms(data.row(i));
            let lse = log_sum_exp(&terms);
            terms.iter_mut().for_each(|t| *t = (*t - lse).exp());
            (terms, lse)
        })
        .collect();
    let mut resp = Vec::with_capacity(data.n() * k);
    let mut loglik = 0.0;
    for (r, lse) in rows {
        resp.extend_from_slice(&r);
        loglik += lse;
    }
    Posterior { resp, loglik, k }
}

fn m_step(
    post: &Posterior,
    data: &Dataset,
    a: f64,
    s: &DMatrix<f64>,
) -> Result<MixingDistribution> {
    let (n, d, k) = (data.n(), data.d(), post.k);
    let masses = post.masses();
    if let Some((c, &m)) = masses.iter().enumerate().find(|(_, &m)| m < UNDERFLOW_MASS) {
        return Err(Error::ComponentStarvation {
            component: c,
            weight: m / n as f64,
        });
    }
    let mut means = vec![vec![0.0; d]; k];
    for (x, r) in data.rows().zip(post.resp.chunks_exact(k)) {
        for c in 0..k {
            for j in 0..d {
                means[c][j] += r[c] * x[j];
            }
        }
    }
    for c in 0..k {
        means[c].iter_mut().for_each(|v| *v /= masses[c]);
    }
    let mut scatter = vec![DMatrix::<f64>::zeros(d, d); k];
    let mut diff = vec![0.0; d];
    for (x, r) in data.rows().zip(post.resp.chunks_exact(k)) {
        for c in 0..k {
            for j in 0..d {
                diff[j] = x[j] - means[c][j];
            }
            let sc = &mut scatter[c];
            for i in 0..d {
                let ri = r[c] * diff[i];
                for j in 0..=i {
                    sc[(i, j)] += ri * diff[j];
                }
            }
        }
    }
    let mut comps = Vec::with_capacity(k);
    for c in 0..k {
        let mut cov = s * (2.0 * a) + &scatter[c];
        for i in 0..d {
            for j in 0..i {
                cov[(j, i)] = cov[(i, j)];
            }
        }
        cov /= 2.0 * a + masses[c];
        comps.push(Gaussian::new(
            DVector::from_vec(std::mem::take(&mut means[c])),
            cov,
        )?);
    }
    let weights = masses.iter().map(|m| m / n as f64).collect();
    MixingDistribution::normalized(weights, comps)
}

/// E-step posterior probabilities `P(component k | x_i)`, one row per observation.
pub fn responsibilities(g: &MixingDistribution, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    if data.d() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: data.d(),
        });
    }
    let post = e_step(g, data);
    Ok(post
        .resp
        .chunks_exact(post.k)
        .map(<[f64]>::to_vec)
        .collect())
}

/// One EM iteration for the penalized likelihood.
pub fn em_step(
    g: &MixingDistribution,
    data: &Dataset,
    a: f64,
    s: &DMatrix<f64>,
) -> Result<MixingDistribution> {
    check_data(g, data, s)?;
    m_step(&e_step(g, data), data, a, s)
}

/// Replaces starved components by `N(x*, S)`, where `x*` is the observation
/// with the lowest mixture density, and gives them weight `1/N`.
fn reseed_starved(
    g: &MixingDistribution,
    masses: &[f64],
    data: &Dataset,
    s: &DMatrix<f64>,
) -> Result<MixingDistribution> {
    let worst = data
        .rows()
        .enumerate()
        .map(|(i, x)| (i, g.log_density_unchecked(x)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
        .0;
    let (mut weights, mut comps) = g.clone().into_parts();
    for (c, &m) in masses.iter().enumerate() {
        if m < STARVATION_MASS {
            log::debug!("reseeding starved component {c} at observation {worst}");
            comps[c] = Gaussian::new(DVector::from_column_slice(data.row(worst)), s.clone())?;
            weights[c] = 1.0 / data.n() as f64;
        }
    }
    MixingDistribution::normalized(weights, comps)
}

/// Runs EM from a single starting value.
fn run_em(
    init: MixingDistribution,
    data: &Dataset,
    a: f64,
    s: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<PmleResult> {
    let n = data.n() as f64;
    let penalty = |g: &MixingDistribution| penalty_term(g, a, s);
    let mut g = init;
    let mut post = e_step(&g, data);
    let mut reseeds = Vec::new();
    if post.masses().iter().any(|&m| m < STARVATION_MASS) {
        g = reseed_starved(&g, &post.masses(), data, s)?;
        post = e_step(&g, data);
        reseeds.push(0);
    }
    let mut trace = vec![post.loglik - penalty(&g)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = m_step(&post, data, a, s)?;
        let mut next_post = e_step(&next, data);
        iterations += 1;
        let masses = next_post.masses();
        let (next, reseeded) = if masses.iter().any(|&m| m < STARVATION_MASS) {
            let r = reseed_starved(&next, &masses, data, s)?;
            next_post = e_step(&r, data);
            reseeds.push(iterations);
            (r, true)
        } else {
            (next, false)
        };
        let value = next_post.loglik - penalty(&next)?;
        let increment = (value - trace[trace.len() - 1]) / n;
        trace.push(value);
        g = next;
        post = next_post;
        if !reseeded && increment < tol {
            converged = true;
            break;
        }
    }
    Ok(PmleResult {
        estimate: g,
        penalized_loglik_trace: trace,
        iterations,
        converged,
        reseeds,
    })
}

/// k-means++ (D² sampling) seeds on the raw data; every component starts
/// at covariance `S` with uniform weights.
pub fn kmeanspp_init(
    data: &Dataset,
    k: usize,
    s: &DMatrix<f64>,
    rng: &mut rng::Rng,
) -> Result<MixingDistribution> {
    let n = data.n();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = data.rows().map(|x| sq(x, data.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, x) in data.rows().enumerate() {
            dist[i] = dist[i].min(sq(x, data.row(next)));
        }
    }
    let comps = centers
        .iter()
        .map(|&c| Gaussian::new(DVector::from_column_slice(data.row(c)), s.clone()))
        .collect::<Result<Vec<_>>>()?;
    MixingDistribution::new(vec![1.0 / k as f64; k], comps)
}

/// Penalized MLE of a `K`-component mixture. Deterministic given `seed`.
pub fn fit(data: &Dataset, cfg: &PmleConfig, seed: u64) -> Result<PmleResult> {
    cfg.validate()?;
    if data.n() <= cfg.k {
        return Err(Error::InvalidArgument(format!(
            "need more observations than components (N = {}, K = {})",
            data.n(),
            cfg.k
        )));
    }
    if !data.is_finite() {
        return Err(Error::NonFinite("data"));
    }
    let a = cfg.penalty.unwrap_or(1.0 / (data.n() as f64).sqrt());
    let s = data.covariance();
    match &cfg.init {
        Init::Explicit(g0) => {
            if g0.order() != cfg.k {
                return Err(Error::InvalidArgument(format!(
                    "initial value has order {}, expected {}",
                    g0.order(),
                    cfg.k
                )));
            }
            if g0.dim() != data.d() {
                return Err(Error::DimensionMismatch {
                    expected: data.d(),
                    got: g0.dim(),
                });
            }
            run_em(g0.clone(), data, a, &s, cfg.tol, cfg.max_iter)
        }
        Init::KMeansPlusPlus { n_starts } => {
            let runs: Vec<Result<PmleResult>> = (0..*n_starts)
                .into_par_iter()
                .map(|start| {
                    let mut r = rng::stream(seed, &[tag::KMEANSPP, start as u64]);
                    let g0 = kmeanspp_init(data, cfg.k, &s, &mut r)?;
                    run_em(g0, data, a, &s, cfg.tol, cfg.max_iter)
                })
                .collect();
            let mut best: Option<PmleResult> = None;
            let mut first_err = None;
            for run in runs {
                match run {
                    Ok(r) => {
                        let better = best.as_ref().is_none_or(|b| {
                            r.penalized_loglik_trace.last() > b.penalized_loglik_trace.last()
                        });
                        if better {
                            best = Some(r);
                        }
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            best.ok_or_else(|| first_err.expect("at least one start"))
        }
    }
}
