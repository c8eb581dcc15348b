//! Split-and-conquer harness: random sharding, local penalized fits, and the
//! reduction, median and KL-averaging aggregators.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gaussian::kl_unchecked;
use crate::gmr::{self, GmrConfig, GmrResult};
use crate::mixture::{MixingDistribution, ModelDocument};
use crate::ot::{solve_ot, CostMatrix};
use crate::pmle::{self, PmleConfig};
use crate::rng::{self, tag};

/// Data partitioned over `M` simulated machines.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardedDataset {
    pub shards: Vec<Dataset>,
    /// `λ_m = N_m / N`.
    pub lambdas: Vec<f64>,
}

impl ShardedDataset {
    /// Wraps existing shards, with `λ_m` set to the sample proportions.
    pub fn from_shards(shards: Vec<Dataset>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::InvalidArgument("no shards".into()));
        }
        let d = shards[0].d();
        if let Some(s) = shards.iter().find(|s| s.d() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.d(),
            });
        }
        let total: usize = shards.iter().map(Dataset::n).sum();
        let lambdas = shards.iter().map(|s| s.n() as f64 / total as f64).collect();
        Ok(Self { shards, lambdas })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Dataset::n).collect()
    }
}

/// Row indices of each shard: a seeded uniform permutation cut into
/// contiguous blocks of sizes `⌈N/M⌉` (first `N mod M` shards) and `⌊N/M⌋`.
/// With `M = 1` the input order is kept.
pub fn split_indices(n: usize, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if m < 1 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} rows into {m} shards"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    if m > 1 {
        perm.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
    }
    let (base, extra) = (n / m, n % m);
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    for s in 0..m {
        let len = base + usize::from(s < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

pub fn split(data: &Dataset, m: usize, seed: u64) -> Result<ShardedDataset> {
    let idx = split_indices(data.n(), m, seed)?;
    ShardedDataset::from_shards(idx.iter().map(|i| data.select(i)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardFit {
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct LocalEstimates {
    pub estimates: Vec<MixingDistribution>,
    pub lambdas: Vec<f64>,
    pub diagnostics: Vec<ShardFit>,
}

impl LocalEstimates {
    pub fn new(estimates: Vec<MixingDistribution>, lambdas: Vec<f64>) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::InvalidArgument("no local estimates".into()));
        }
        if estimates.len() != lambdas.len() {
            return Err(Error::DimensionMismatch {
                expected: estimates.len(),
                got: lambdas.len(),
            });
        }
        let (k, d) = (estimates[0].order(), estimates[0].dim());
        for g in &estimates {
            if g.order() != k {
                return Err(Error::InvalidArgument(format!(
                    "local orders differ: {} vs {k}",
                    g.order()
                )));
            }
            if g.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.dim(),
                });
            }
        }
        let total: f64 = lambdas.iter().sum();
        if (total - 1.0).abs() > 1e-9 || lambdas.iter().any(|&l| l < 0.0) {
            return Err(Error::WeightSum(total));
        }
        Ok(Self {
            estimates,
            lambdas,
            diagnostics: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.estimates[0].order()
    }

    /// Wall-clock time of the slowest shard.
    pub fn max_seconds(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.seconds)
            .fold(0.0, f64::max)
    }
}

/// Fits each shard with penalty `N_m^{-1/2}` and seed derived from
/// `(seed, m)`. Shards run concurrently; results are ordered by shard.
pub fn fit_locals(shards: &ShardedDataset, cfg: &PmleConfig, seed: u64) -> Result<LocalEstimates> {
    let mut local_cfg = cfg.clone();
    local_cfg.penalty = None;
    let fits: Vec<(pmle::PmleResult, f64)> = shards
        .shards
        .par_iter()
        .enumerate()
        .map(|(m, data)| {
            let start = Instant::now();
            let r = pmle::fit(
                data,
                &local_cfg,
                rng::derive_seed(seed, &[tag::SHARD, m as u64]),
            )
            .map_err(|e| Error::Shard {
                shard: m,
                source: Box::new(e),
            })?;
            Ok((r, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let diagnostics = fits
        .iter()
        .map(|(r, secs)| ShardFit {
            iterations: r.iterations,
            converged: r.converged,
            seconds: *secs,
        })
        .collect();
    let mut locals = LocalEstimates::new(
        fits.into_iter().map(|(r, _)| r.estimate).collect(),
        shards.lambdas.clone(),
    )?;
    locals.diagnostics = diagnostics;
    Ok(locals)
}

/// `T_KL(a, b)`: optimal transport between the atoms of two mixing
/// distributions with cost `KL(Φ_i ‖ Φ_γ)`, both marginals fixed.
pub fn kl_transport(a: &MixingDistribution, b: &MixingDistribution) -> Result<f64> {
    let cost = CostMatrix::from_fn(a.order(), b.order(), |i, j| {
        Ok(kl_unchecked(&a.components()[i], &b.components()[j]))
    })?;
    Ok(solve_ot(&cost, a.weights(), b.weights())?.objective)
}

/// Per-candidate median criterion `Σ_m' λ_m' T_KL(Ĝ_m', Ĝ_c)`.
pub fn median_criteria(locals: &LocalEstimates) -> Result<Vec<f64>> {
    let m = locals.estimates.len();
    (0..m)
        .into_par_iter()
        .map(|c| {
            let mut total = 0.0;
            for (g, &l) in locals.estimates.iter().zip(&locals.lambdas) {
                total += l * kl_transport(g, &locals.estimates[c])?;
            }
            Ok(total)
        })
        .collect()
}

/// Index of the local estimate minimizing the median criterion (smallest
/// index on ties).
pub fn median_index(locals: &LocalEstimates) -> Result<usize> {
    let crit = median_criteria(locals)?;
    Ok(crate::ot::argmin_first(&crit))
}

pub fn aggregate_median(locals: &LocalEstimates) -> Result<MixingDistribution> {
    Ok(locals.estimates[median_index(locals)?].clone())
}

/// Pools the local estimates and reduces to order `cfg.k`, starting from the
/// median local estimate unless `cfg.init` is set.
pub fn aggregate_gmr_detailed(locals: &LocalEstimates, cfg: &GmrConfig) -> Result<GmrResult> {
    let pooled = gmr::pool(&locals.estimates, &locals.lambdas)?;
    let mut cfg = cfg.clone();
    if cfg.init.is_none() && locals.order() == cfg.k {
        cfg.init = Some(aggregate_median(locals)?);
    }
    gmr::reduce(&pooled, &cfg)
}

pub fn aggregate_gmr(locals: &LocalEstimates, cfg: &GmrConfig) -> Result<MixingDistribution> {
    Ok(aggregate_gmr_detailed(locals, cfg)?.estimate)
}

/// Samples `per_machine_n` points from every local estimate and refits a
/// `cfg.k`-component mixture on the union with penalty `(M·n)^{-1/2}`.
pub fn aggregate_klavg(
    locals: &LocalEstimates,
    per_machine_n: usize,
    cfg: &PmleConfig,
    seed: u64,
) -> Result<MixingDistribution> {
    if per_machine_n < cfg.k + 1 {
        return Err(Error::InvalidArgument(format!(
            "per-machine sample size {per_machine_n} must exceed K = {}",
            cfg.k
        )));
    }
    let d = locals.estimates[0].dim();
    let mut values = Vec::with_capacity(locals.estimates.len() * per_machine_n * d);
    for (m, g) in locals.estimates.iter().enumerate() {
        let s = g.sample(
            per_machine_n,
            rng::derive_seed(seed, &[tag::KLAVG, m as u64]),
        )?;
        values.extend_from_slice(s.points.values());
    }
    let total = locals.estimates.len() * per_machine_n;
    let data = Dataset::new(total, d, values)?;
    let cfg = cfg.clone().with_penalty(1.0 / (total as f64).sqrt());
    Ok(pmle::fit(&data, &cfg, rng::derive_seed(seed, &[tag::KLAVG]))?.estimate)
}

pub const LOCALS_FORMAT: &str = "locals-v1";

/// JSON document holding a set of local estimates and their `λ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalsDocument {
    pub format: String,
    pub lambdas: Vec<f64>,
    pub estimates: Vec<ModelDocument>,
}

impl LocalEstimates {
    pub fn to_document(&self) -> LocalsDocument {
        LocalsDocument {
            format: LOCALS_FORMAT.to_string(),
            lambdas: self.lambdas.clone(),
            estimates: self
                .estimates
                .iter()
                .map(MixingDistribution::to_document)
                .collect(),
        }
    }

    pub fn from_document(doc: &LocalsDocument) -> Result<Self> {
        if doc.format != LOCALS_FORMAT {
            return Err(Error::Schema(format!(
                "unsupported format '{}'",
                doc.format
            )));
        }
        let estimates = doc
            .estimates
            .iter()
            .map(MixingDistribution::from_document)
            .collect::<Result<Vec<_>>>()?;
        Self::new(estimates, doc.lambdas.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LocalsDocument =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_document(&doc)
    }
}
