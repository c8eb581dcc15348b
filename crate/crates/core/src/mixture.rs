//! Finite Gaussian mixing distributions.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::rng::{self, tag};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Weights below this are treated as zero when renormalizing.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// `G = Σ_k w_k δ_{(μ_k, Σ_k)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDistribution {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl MixingDistribution {
    /// Validates weights on the simplex (within `1e-9`) and a shared dimension.
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        let d = components[0].dim();
        if let Some(g) = components.iter().find(|g| g.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: g.dim(),
            });
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::WeightSum(w));
        }
        if let Some(&w) = weights.iter().find(|&&w| w < 0.0) {
            return Err(Error::NegativeWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightSum(total));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    /// Clamps weights below [`WEIGHT_FLOOR`] to zero and rescales the rest to
    /// sum to one. Used for aggregated estimates.
    pub fn normalized(mut weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        for w in weights.iter_mut() {
            if *w < WEIGHT_FLOOR {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::WeightSum(total));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights, components)
    }

    pub fn single(g: Gaussian) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![g],
        }
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<Gaussian>) {
        (self.weights, self.components)
    }

    /// Same components in the order given by `perm` (`new[k] = old[perm[k]]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&k| self.weights[k]).collect(),
            components: perm.iter().map(|&k| self.components[k].clone()).collect(),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        Ok(())
    }

    /// `log Σ_k w_k φ(x | μ_k, Σ_k)` by log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self.weighted_log_terms(x);
        log_sum_exp(&terms)
    }

    /// `ln w_k + log φ(x | θ_k)` per component; `-∞` for zero weights.
    pub(crate) fn weighted_log_terms(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(&w, g)| {
                if w > 0.0 {
                    w.ln() + g.log_density_unchecked(x)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// `argmax_k w_k φ(x | θ_k)`, smallest index on ties.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        self.check_point(x)?;
        Ok(self.classify_unchecked(x))
    }

    pub(crate) fn classify_unchecked(&self, x: &[f64]) -> usize {
        argmax_first(&self.weighted_log_terms(x))
    }

    pub fn classify_all(&self, data: &Dataset) -> Result<Vec<usize>> {
        if data.d() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: data.d(),
            });
        }
        Ok(data.rows().map(|x| self.classify_unchecked(x)).collect())
    }

    /// `n` i.i.d. labelled draws; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledSample> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "sample size must be at least 1".into(),
            ));
        }
        let mut rng = rng::stream(seed, &[tag::SAMPLE]);
        let pick = WeightedIndex::new(&self.weights)
            .map_err(|e| Error::InvalidArgument(format!("weights: {e}")))?;
        let d = self.dim();
        let mut values = vec![0.0; n * d];
        let mut labels = Vec::with_capacity(n);
        for row in values.chunks_exact_mut(d) {
            let k = if self.order() == 1 {
                0
            } else {
                pick.sample(&mut rng)
            };
            self.components[k].sample_into(&mut rng, row);
            labels.push(k);
        }
        Ok(LabeledSample {
            points: Dataset::new(n, d, values)?,
            labels: Some(labels),
        })
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            d: self.dim(),
            k: self.order(),
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|g| ComponentDocument {
                    mean: g.mean().iter().copied().collect(),
                    cov: (0..g.dim())
                        .map(|i| g.cov().row(i).iter().copied().collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT {
            return Err(Error::Schema(format!(
                "unsupported format '{}'",
                doc.format
            )));
        }
        if doc.weights.len() != doc.k || doc.components.len() != doc.k {
            return Err(Error::Schema(format!(
                "K = {} but {} weights and {} components",
                doc.k,
                doc.weights.len(),
                doc.components.len()
            )));
        }
        let components = doc
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if c.mean.len() != doc.d
                    || c.cov.len() != doc.d
                    || c.cov.iter().any(|r| r.len() != doc.d)
                {
                    return Err(Error::Schema(format!(
                        "component {k}: shape does not match d = {}",
                        doc.d
                    )));
                }
                let cov = DMatrix::from_row_iterator(doc.d, doc.d, c.cov.iter().flatten().copied());
                Gaussian::new(DVector::from_column_slice(&c.mean), cov)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc.weights.clone(), components)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

pub const MODEL_FORMAT: &str = "mixture-v1";

/// JSON model document, `"format": "mixture-v1"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub weights: Vec<f64>,
    pub components: Vec<ComponentDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDocument {
    pub mean: Vec<f64>,
    /// Full row-major matrix.
    pub cov: Vec<Vec<f64>>,
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}
