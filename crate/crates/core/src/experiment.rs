//! End-to-end simulation driver: draw a truth, sample, shard, fit locally,
//! aggregate with each requested method and score against the truth.
//!
//! Report CSV header (stable): `replication,method,w1,mcr,ari,local_seconds,agg_seconds`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{self, LocalEstimates};
use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::gmr::GmrConfig;
use crate::metrics::{align_labels, ari, misclassification_rate, w1_distance, Clustering};
use crate::mixture::{MixingDistribution, ModelDocument};
use crate::pmle::{self, Init, PmleConfig};
use crate::rng::{self, tag};
use crate::simgen::{self, OverlapSpec};

pub const CONFIG_VERSION: u32 = 1;
pub const REPORT_HEADER: &str = "replication,method,w1,mcr,ari,local_seconds,agg_seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Global,
    Gmr,
    Median,
    Klavg,
    Pool,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Global => "global",
            Method::Gmr => "gmr",
            Method::Median => "median",
            Method::Klavg => "klavg",
            Method::Pool => "pool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Start every EM run from the true mixing distribution.
    #[default]
    Truth,
    Kmeanspp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Inline(ModelDocument),
    Path(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub max_omega: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_mc_samples() -> usize {
    100_000
}

fn default_n_starts() -> usize {
    10
}

fn default_klavg_n() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Fixed truth; when absent a fresh model is generated per replication.
    #[serde(default)]
    pub model: Option<ModelSource>,
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub replications: usize,
    #[serde(default)]
    pub init: InitStrategy,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    #[serde(default = "default_klavg_n")]
    pub klavg_n: usize,
    /// Wall-clock columns are written as 0 when false.
    #[serde(default = "default_true")]
    pub timing: bool,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a model given by path is resolved relative to
    /// the config's directory and inlined.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let Some(ModelSource::Path(p)) = &cfg.model {
            let base = path.parent().unwrap_or(Path::new("."));
            let text = std::fs::read_to_string(base.join(p))?;
            let doc: ModelDocument =
                serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
            cfg.model = Some(ModelSource::Inline(doc));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Schema(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.version));
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty".into());
        }
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if self.m < 1 || self.m > self.n {
            return bad(format!("cannot split N = {} over M = {}", self.n, self.m));
        }
        if self.k < 1 || self.d < 1 {
            return bad("K and d must be positive".into());
        }
        if self.n_starts < 1 {
            return bad("n_starts must be at least 1".into());
        }
        match (&self.model, &self.generate) {
            (None, None) => bad("one of 'model' or 'generate' is required".into()),
            (Some(_), Some(_)) => bad("'model' and 'generate' are mutually exclusive".into()),
            _ => Ok(()),
        }
    }

    fn fixed_model(&self) -> Result<Option<MixingDistribution>> {
        match &self.model {
            Some(ModelSource::Inline(doc)) => {
                let g = MixingDistribution::from_document(doc)?;
                if g.order() != self.k || g.dim() != self.d {
                    return Err(Error::Schema(format!(
                        "model has K = {}, d = {} but config declares K = {}, d = {}",
                        g.order(),
                        g.dim(),
                        self.k,
                        self.d
                    )));
                }
                Ok(Some(g))
            }
            Some(ModelSource::Path(p)) => {
                Err(Error::Schema(format!("model path '{p}' was not resolved")))
            }
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub replication: usize,
    pub method: Method,
    pub w1: f64,
    /// `NaN` when the estimate's order differs from the truth (pooled).
    pub mcr: f64,
    pub ari: f64,
    pub local_seconds: f64,
    pub agg_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.replication,
                r.method.name(),
                r.w1,
                r.mcr,
                r.ari,
                r.local_seconds,
                r.agg_seconds
            );
        }
        out
    }

    pub fn method_rows(&self, method: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

/// Estimates of one replication, for callers that need more than the scores.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub truth: MixingDistribution,
    pub sample: LabeledSample,
    pub estimates: Vec<(Method, MixingDistribution)>,
    pub rows: Vec<ReportRow>,
}

fn score(
    replication: usize,
    method: Method,
    est: &MixingDistribution,
    truth: &MixingDistribution,
    sample: &LabeledSample,
    local_seconds: f64,
    agg_seconds: f64,
) -> Result<ReportRow> {
    let w1 = w1_distance(est, truth)?;
    let mcr = if est.order() == truth.order() {
        misclassification_rate(est, sample, &align_labels(est, truth)?)?
    } else {
        f64::NAN
    };
    let truth_labels = sample.labels.clone().unwrap_or_default();
    let pred = est.classify_all(&sample.points)?;
    let ari = ari(
        &Clustering::new(pred, est.order())?,
        &Clustering::new(truth_labels, truth.order())?,
    )?;
    Ok(ReportRow {
        replication,
        method,
        w1,
        mcr,
        ari,
        local_seconds,
        agg_seconds,
    })
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

/// Runs replication `r` of `cfg`.
pub fn run_replication(cfg: &ExperimentConfig, r: usize) -> Result<ReplicationOutcome> {
    cfg.validate()?;
    let rep_seed = rng::derive_seed(cfg.seed, &[tag::REPLICATION, r as u64]);
    let truth = match cfg.fixed_model()? {
        Some(g) => g,
        None => {
            let gen = cfg.generate.as_ref().expect("validated");
            simgen::generate(&OverlapSpec {
                mc_samples: gen.mc_samples,
                ..OverlapSpec::new(
                    cfg.d,
                    cfg.k,
                    gen.max_omega,
                    rng::derive_seed(rep_seed, &[tag::MODEL]),
                )
            })?
        }
    };
    let sample = truth.sample(cfg.n, rep_seed)?;
    let init = match cfg.init {
        InitStrategy::Truth => Init::Explicit(truth.clone()),
        InitStrategy::Kmeanspp => Init::KMeansPlusPlus {
            n_starts: cfg.n_starts,
        },
    };
    let pcfg = PmleConfig::new(cfg.k).with_init(init);
    let keep = |t: f64| if cfg.timing { t } else { 0.0 };

    let mut estimates = Vec::new();
    let mut rows = Vec::new();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let needs_locals = methods.iter().any(|&m| m != Method::Global);
    let locals: Option<LocalEstimates> = if needs_locals {
        let shards = aggregate::split(&sample.points, cfg.m, rep_seed)?;
        Some(aggregate::fit_locals(&shards, &pcfg, rep_seed)?)
    } else {
        None
    };
    let local_secs = locals.as_ref().map_or(0.0, LocalEstimates::max_seconds);

    for &method in &methods {
        let (est, local, agg) = match method {
            Method::Global => {
                let (fit, secs) = timed(|| pmle::fit(&sample.points, &pcfg, rep_seed))?;
                (fit.estimate, secs, 0.0)
            }
            other => {
                let locals = locals.as_ref().expect("computed above");
                let (est, secs) = timed(|| match other {
                    Method::Gmr => aggregate::aggregate_gmr(locals, &GmrConfig::new(cfg.k)),
                    Method::Median => aggregate::aggregate_median(locals),
                    Method::Klavg => {
                        let kcfg = PmleConfig::new(cfg.k).with_init(Init::KMeansPlusPlus {
                            n_starts: cfg.n_starts,
                        });
                        aggregate::aggregate_klavg(locals, cfg.klavg_n, &kcfg, rep_seed)
                    }
                    Method::Pool => crate::gmr::pool(&locals.estimates, &locals.lambdas),
                    Method::Global => unreachable!(),
                })?;
                (est, local_secs, secs)
            }
        };
        rows.push(score(
            r,
            method,
            &est,
            &truth,
            &sample,
            keep(local),
            keep(agg),
        )?);
        estimates.push((method, est));
    }
    Ok(ReplicationOutcome {
        truth,
        sample,
        estimates,
        rows,
    })
}

/// All replications, run concurrently; rows ordered by (replication, method).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_rep: Vec<Vec<ReportRow>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r).map(|o| o.rows))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport {
        rows: per_rep.into_iter().flatten().collect(),
    })
}
