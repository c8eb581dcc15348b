//! Split-and-conquer estimation of finite Gaussian mixtures.
//!
//! Data are split over `M` machines, each machine fits a penalized maximum
//! likelihood estimate, and the local estimates are aggregated by Gaussian
//! mixture reduction, a median estimator, or KL-averaging.

// Index loops mirror the matrix formulas; `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod gmr;
pub mod metrics;
pub mod mixture;
pub mod ot;
pub mod pmle;
pub mod rng;
pub mod simgen;

pub use aggregate::{
    aggregate_gmr, aggregate_klavg, aggregate_median, fit_locals, split, LocalEstimates,
    ShardedDataset,
};
pub use data::{Dataset, LabeledSample};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, Method};
pub use gaussian::{ground_distance, kl_barycenter, kl_divergence, Gaussian};
pub use gmr::{reduce, GmrConfig, GmrResult};
pub use metrics::{align_labels, ari, misclassification_rate, w1_distance, Clustering};
pub use mixture::{MixingDistribution, ModelDocument};
pub use ot::{relaxed_plan, solve_ot, CostMatrix, TransportPlan};
pub use pmle::{fit, Init, PmleConfig, PmleResult};
pub use simgen::{generate, OverlapSpec};
