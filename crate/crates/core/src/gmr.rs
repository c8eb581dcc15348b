//! Gaussian mixture reduction by majorization-minimization.
//!
//! Given a pooled mixing distribution with `MK` atoms, find `K` Gaussians
//! minimizing the transportation divergence from the pooled atoms. With only
//! the source marginal constrained, the optimal plan sends each pooled atom
//! to its cheapest target (`ot::relaxed_plan`). Holding that plan fixed, each
//! target is updated to the cost barycenter of the atoms it receives, which
//! never increases the objective.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{kl_unchecked, moment_match, Gaussian};
use crate::mixture::MixingDistribution;
use crate::ot::{argmin_first, relaxed_plan, CostMatrix, TransportPlan};

/// Cost between Gaussians together with its weighted minimizer.
pub trait ReductionCost: Sync {
    fn cost(&self, from: &Gaussian, to: &Gaussian) -> f64;

    /// `argmin_Φ Σ_i λ_i c(Φ_i, Φ)` for weights summing to one.
    fn barycenter(&self, parts: &[(&Gaussian, f64)]) -> Result<Gaussian>;
}

/// `c(Φ_i, Φ) = KL(Φ_i ‖ Φ)`; the minimizer is moment matching.
#[derive(Debug, Clone, Copy, Default)]
pub struct KlCost;

impl ReductionCost for KlCost {
    fn cost(&self, from: &Gaussian, to: &Gaussian) -> f64 {
        kl_unchecked(from, to)
    }

    fn barycenter(&self, parts: &[(&Gaussian, f64)]) -> Result<Gaussian> {
        let d = parts[0].0.dim();
        moment_match(parts.iter().map(|&(g, l)| (g, l)), d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostKind {
    #[default]
    Kl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmrConfig {
    pub k: usize,
    pub cost: CostKind,
    /// Stop when the objective changes by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting components. `None` starts from the `K` heaviest pooled atoms.
    pub init: Option<MixingDistribution>,
}

impl GmrConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            cost: CostKind::Kl,
            tol: 1e-6,
            max_iter: 1000,
            init: None,
        }
    }

    pub fn with_init(mut self, init: MixingDistribution) -> Self {
        self.init = Some(init);
        self
    }
}

#[derive(Debug, Clone)]
pub struct GmrResult {
    pub estimate: MixingDistribution,
    /// Objective of the initial value, then one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub plan: TransportPlan,
    pub iterations: usize,
    pub converged: bool,
    /// Trace indices produced by an iteration that reseeded an empty target.
    pub reseeds: Vec<usize>,
}

/// Concatenates local mixing distributions, scaling machine `m` by `λ_m`.
pub fn pool(locals: &[MixingDistribution], lambdas: &[f64]) -> Result<MixingDistribution> {
    if locals.is_empty() {
        return Err(Error::InvalidArgument("nothing to pool".into()));
    }
    if locals.len() != lambdas.len() {
        return Err(Error::DimensionMismatch {
            expected: locals.len(),
            got: lambdas.len(),
        });
    }
    let d = locals[0].dim();
    let mut weights = Vec::new();
    let mut comps = Vec::new();
    for (g, &l) in locals.iter().zip(lambdas) {
        if g.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: g.dim(),
            });
        }
        weights.extend(g.weights().iter().map(|w| l * w));
        comps.extend(g.components().iter().cloned());
    }
    MixingDistribution::new(weights, comps)
}

fn cost_matrix<C: ReductionCost>(
    cost: &C,
    pooled: &MixingDistribution,
    targets: &[Gaussian],
) -> Result<CostMatrix> {
    let rows: Vec<f64> = pooled
        .components()
        .par_iter()
        .flat_map_iter(|p| targets.iter().map(move |t| cost.cost(p, t)))
        .collect();
    CostMatrix::new(pooled.order(), targets.len(), rows)
}

/// `J_c(G) = Σ_i w_i min_γ c(Φ_i, Φ_γ)` with the KL cost.
pub fn objective(pooled: &MixingDistribution, g: &MixingDistribution) -> Result<f64> {
    objective_with(pooled, g, &KlCost)
}

pub fn objective_with<C: ReductionCost>(
    pooled: &MixingDistribution,
    g: &MixingDistribution,
    cost: &C,
) -> Result<f64> {
    if pooled.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: pooled.dim(),
            got: g.dim(),
        });
    }
    Ok(relaxed_plan(
        &cost_matrix(cost, pooled, g.components())?,
        pooled.weights(),
    )?
    .objective)
}

/// Reduces `pooled` to order `cfg.k` with the KL cost.
pub fn reduce(pooled: &MixingDistribution, cfg: &GmrConfig) -> Result<GmrResult> {
    match cfg.cost {
        CostKind::Kl => reduce_with(pooled, cfg, &KlCost),
    }
}

fn heaviest_atoms(pooled: &MixingDistribution, k: usize) -> Vec<Gaussian> {
    let mut idx: Vec<usize> = (0..pooled.order()).collect();
    idx.sort_by(|&a, &b| {
        pooled.weights()[b]
            .total_cmp(&pooled.weights()[a])
            .then(a.cmp(&b))
    });
    idx[..k]
        .iter()
        .map(|&i| pooled.components()[i].clone())
        .collect()
}

pub fn reduce_with<C: ReductionCost>(
    pooled: &MixingDistribution,
    cfg: &GmrConfig,
    cost: &C,
) -> Result<GmrResult> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            cfg.tol
        )));
    }
    if pooled.order() < cfg.k {
        return Err(Error::InvalidArgument(format!(
            "pooled order {} is below target order {}",
            pooled.order(),
            cfg.k
        )));
    }
    let mut targets = match &cfg.init {
        Some(g0) => {
            if g0.order() != cfg.k {
                return Err(Error::InvalidArgument(format!(
                    "initial value has order {}, expected {}",
                    g0.order(),
                    cfg.k
                )));
            }
            if g0.dim() != pooled.dim() {
                return Err(Error::DimensionMismatch {
                    expected: pooled.dim(),
                    got: g0.dim(),
                });
            }
            g0.components().to_vec()
        }
        None => heaviest_atoms(pooled, cfg.k),
    };
    let w = pooled.weights();

    let mut costs = cost_matrix(cost, pooled, &targets)?;
    let mut plan = relaxed_plan(&costs, w)?;
    let mut trace = vec![plan.objective];
    let mut reseeds = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut pending_reseed: Vec<usize> = Vec::new();

    while iterations < cfg.max_iter {
        let mass = plan.col_sums();
        if let Some(&g) = pending_reseed.iter().find(|&&g| mass[g] <= 0.0) {
            return Err(Error::EmptyComponent(g));
        }
        let updated: Vec<Option<Gaussian>> = (0..cfg.k)
            .into_par_iter()
            .map(|g| {
                if mass[g] <= 0.0 {
                    return Ok(None);
                }
                let parts: Vec<(&Gaussian, f64)> = (0..pooled.order())
                    .filter(|&i| plan.get(i, g) > 0.0)
                    .map(|i| (&pooled.components()[i], plan.get(i, g) / mass[g]))
                    .collect();
                cost.barycenter(&parts).map(Some)
            })
            .collect::<Result<_>>()?;

        // Empty targets move to the pooled atoms currently paying the most.
        let empty: Vec<usize> = (0..cfg.k).filter(|&g| mass[g] <= 0.0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..pooled.order()).filter(|&i| w[i] > 0.0).collect();
            let paid = |i: usize| costs.get(i, argmin_first(costs.row(i)));
            order.sort_by(|&a, &b| paid(b).total_cmp(&paid(a)).then(a.cmp(&b)));
            for (&g, &i) in empty.iter().zip(&order) {
                log::info!(
                    "reduction iteration {}: reseeding empty target {g} at pooled atom {i}",
                    iterations + 1
                );
                targets[g] = pooled.components()[i].clone();
            }
        }
        for (g, u) in updated.into_iter().enumerate() {
            if let Some(u) = u {
                targets[g] = u;
            }
        }

        costs = cost_matrix(cost, pooled, &targets)?;
        plan = relaxed_plan(&costs, w)?;
        iterations += 1;
        let prev = trace[trace.len() - 1];
        trace.push(plan.objective);
        if !empty.is_empty() {
            reseeds.push(iterations);
            pending_reseed = empty;
            continue;
        }
        pending_reseed.clear();
        if (prev - plan.objective).abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    let mass = plan.col_sums();
    if let Some(&g) = pending_reseed.iter().find(|&&g| mass[g] <= 0.0) {
        return Err(Error::EmptyComponent(g));
    }

    for (g, t) in targets.iter().enumerate() {
        if let Some(eig) = SymmetricEigen::try_new(t.cov().clone(), f64::EPSILON, 0) {
            let min = eig.eigenvalues.min();
            if min < 1e-10 {
                log::warn!("reduced component {g} has covariance eigenvalue {min:e}");
            }
        }
    }
    let estimate = MixingDistribution::normalized(mass, targets)?;
    Ok(GmrResult {
        estimate,
        objective_trace: trace,
        plan,
        iterations,
        converged,
        reseeds,
    })
}
