//! Python bindings for the `scgmm` mixture toolkit.
//!
//! Data are passed as lists of rows (`list[list[float]]`); models cross the
//! boundary as `Gaussian` and `MixingDistribution` objects or as JSON.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use scgmm::aggregate::{self as agg, LocalEstimates};
use scgmm::gmr::{self, GmrConfig};
use scgmm::metrics::{self, Clustering};
use scgmm::pmle::{self, Init, PmleConfig};
use scgmm::simgen::{self, OverlapSpec};
use scgmm::{Dataset, Error};

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn dataset(rows: Vec<Vec<f64>>) -> PyResult<Dataset> {
    Dataset::from_rows(&rows).map_err(to_py)
}

/// Multivariate normal distribution with full covariance.
#[pyclass(name = "Gaussian", module = "scgmm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGaussian {
    inner: scgmm::Gaussian,
}

#[pymethods]
impl PyGaussian {
    #[new]
    fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err(format!("covariance must be {d}x{d}")));
        }
        let flat: Vec<f64> = cov.into_iter().flatten().collect();
        Ok(Self {
            inner: scgmm::Gaussian::from_slices(&mean, &flat).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    #[getter]
    fn cov(&self) -> Vec<Vec<f64>> {
        let c = self.inner.cov();
        (0..c.nrows())
            .map(|i| c.row(i).iter().copied().collect())
            .collect()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&x).map_err(to_py)
    }

    /// KL(self ‖ other).
    fn kl(&self, other: PyRef<'_, PyGaussian>) -> PyResult<f64> {
        scgmm::kl_divergence(&self.inner, &other.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Gaussian(mean={:?}, cov={:?})", self.mean(), self.cov())
    }
}

/// Finite Gaussian mixture: weights on the simplex and one Gaussian per atom.
#[pyclass(
    name = "MixingDistribution",
    module = "scgmm_py",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyMixture {
    inner: scgmm::MixingDistribution,
}

impl From<scgmm::MixingDistribution> for PyMixture {
    fn from(inner: scgmm::MixingDistribution) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyMixture {
    #[new]
    fn new(weights: Vec<f64>, components: Vec<PyRef<'_, PyGaussian>>) -> PyResult<Self> {
        let comps = components.iter().map(|g| g.inner.clone()).collect();
        Ok(scgmm::MixingDistribution::new(weights, comps)
            .map_err(to_py)?
            .into())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(scgmm::MixingDistribution::from_json(text)
            .map_err(to_py)?
            .into())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn components(&self) -> Vec<PyGaussian> {
        self.inner
            .components()
            .iter()
            .map(|g| PyGaussian { inner: g.clone() })
            .collect()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&x).map_err(to_py)
    }

    /// Most probable component for each row.
    fn classify(&self, data: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        self.inner.classify_all(&dataset(data)?).map_err(to_py)
    }

    /// Returns `(rows, labels)`.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
        let s = self.inner.sample(n, seed).map_err(to_py)?;
        let rows = s.points.rows().map(<[f64]>::to_vec).collect();
        Ok((rows, s.labels.unwrap_or_default()))
    }

    fn __repr__(&self) -> String {
        format!(
            "MixingDistribution(order={}, dim={}, weights={:?})",
            self.order(),
            self.dim(),
            self.weights()
        )
    }
}

/// Penalized maximum likelihood fit by EM.
#[pyfunction]
#[pyo3(signature = (data, k, seed = 0, n_starts = 10, init = None, penalty = None))]
fn fit(
    data: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
    n_starts: usize,
    init: Option<PyRef<'_, PyMixture>>,
    penalty: Option<f64>,
) -> PyResult<PyMixture> {
    let init = match init {
        Some(g) => Init::Explicit(g.inner.clone()),
        None => Init::KMeansPlusPlus { n_starts },
    };
    let mut cfg = PmleConfig::new(k).with_init(init);
    cfg.penalty = penalty;
    Ok(pmle::fit(&dataset(data)?, &cfg, seed)
        .map_err(to_py)?
        .estimate
        .into())
}

/// Reduce a mixture to `k` components with the KL-cost MM algorithm.
#[pyfunction]
#[pyo3(signature = (pooled, k, init = None))]
fn reduce(
    pooled: PyRef<'_, PyMixture>,
    k: usize,
    init: Option<PyRef<'_, PyMixture>>,
) -> PyResult<PyMixture> {
    let mut cfg = GmrConfig::new(k);
    if let Some(g) = init {
        cfg = cfg.with_init(g.inner.clone());
    }
    Ok(gmr::reduce(&pooled.inner, &cfg)
        .map_err(to_py)?
        .estimate
        .into())
}

/// Aggregate local estimates: method is "gmr", "median", "klavg" or "pool".
#[pyfunction]
#[pyo3(signature = (locals, lambdas = None, method = "gmr", k = None, seed = 0, per_machine_n = 1000))]
fn aggregate(
    locals: Vec<PyRef<'_, PyMixture>>,
    lambdas: Option<Vec<f64>>,
    method: &str,
    k: Option<usize>,
    seed: u64,
    per_machine_n: usize,
) -> PyResult<PyMixture> {
    let m = locals.len();
    let lambdas = lambdas.unwrap_or_else(|| vec![1.0 / m.max(1) as f64; m]);
    let locals = LocalEstimates::new(locals.iter().map(|g| g.inner.clone()).collect(), lambdas)
        .map_err(to_py)?;
    let k = k.unwrap_or_else(|| locals.order());
    let out = match method {
        "gmr" => agg::aggregate_gmr(&locals, &GmrConfig::new(k)),
        "median" => agg::aggregate_median(&locals),
        "klavg" => agg::aggregate_klavg(&locals, per_machine_n, &PmleConfig::new(k), seed),
        "pool" => gmr::pool(&locals.estimates, &locals.lambdas),
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    Ok(out.map_err(to_py)?.into())
}

/// Transportation distance between two mixtures.
#[pyfunction]
fn w1(a: PyRef<'_, PyMixture>, b: PyRef<'_, PyMixture>) -> PyResult<f64> {
    metrics::w1_distance(&a.inner, &b.inner).map_err(to_py)
}

/// Adjusted Rand index of two label vectors.
#[pyfunction]
fn ari(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    metrics::ari(&Clustering::from_labels(a), &Clustering::from_labels(b)).map_err(to_py)
}

/// Random mixture whose Monte Carlo maximum pairwise overlap hits `max_omega`.
#[pyfunction]
#[pyo3(signature = (d, k, max_omega, seed = 0, mc_samples = 100_000))]
fn generate(
    d: usize,
    k: usize,
    max_omega: f64,
    seed: u64,
    mc_samples: usize,
) -> PyResult<PyMixture> {
    let spec = OverlapSpec {
        mc_samples,
        ..OverlapSpec::new(d, k, max_omega, seed)
    };
    Ok(simgen::generate(&spec).map_err(to_py)?.into())
}

/// Random partition of `range(n)` into `m` shards of near-equal size.
#[pyfunction]
#[pyo3(signature = (n, m, seed = 0))]
fn split(n: usize, m: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    agg::split_indices(n, m, seed).map_err(to_py)
}

#[pymodule]
fn scgmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussian>()?;
    m.add_class::<PyMixture>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(w1, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    Ok(())
}
