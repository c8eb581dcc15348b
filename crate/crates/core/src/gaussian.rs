//! Multivariate Gaussian primitives: log-density, KL divergence, the
//! mean/root-covariance ground distance and the weighted KL barycenter.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A Gaussian distribution `N(mean, cov)` with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// Lower-triangular Cholesky factor of `cov`, row-major.
    chol: Vec<f64>,
    log_det: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    /// Builds a Gaussian, symmetrizing `cov` as `(A + Aᵀ)/2`.
    ///
    /// Fails if the dimensions disagree, any entry is non-finite, the
    /// covariance is asymmetric beyond `1e-9` per entry, or it is not
    /// positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidArgument("zero-dimensional Gaussian".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if cov.nrows() != d {
                    cov.nrows()
                } else {
                    cov.ncols()
                },
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean"));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance"));
        }
        let asym = (0..d)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (cov[(i, j)] - cov[(j, i)]).abs())
            .fold(0.0, f64::max);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let chol = cholesky(&cov).ok_or(Error::NotPositiveDefinite)?;
        let log_det = 2.0 * (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>();
        Ok(Self {
            mean,
            cov,
            chol,
            log_det,
        })
    }

    pub fn from_slices(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let d = mean.len();
        if cov_row_major.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: cov_row_major.len(),
            });
        }
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(d, d, cov_row_major),
        )
    }

    /// Univariate `N(mean, var)`.
    pub fn univariate(mean: f64, var: f64) -> Result<Self> {
        Self::from_slices(&[mean], &[var])
    }

    /// `N(mean, var · I)`.
    pub fn isotropic(mean: &[f64], var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::identity(d, d) * var,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `ln det Σ`, from the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Lower Cholesky factor as a matrix.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.chol)
    }

    /// Same mean, covariance multiplied by `factor > 0`.
    pub fn with_scaled_cov(&self, factor: f64) -> Result<Self> {
        Self::new(self.mean.clone(), &self.cov * factor)
    }

    /// `log φ(x | μ, Σ)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        Ok(self.log_density_unchecked(x))
    }

    /// `log_density` without argument validation; `x.len()` must equal `dim()`.
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        -0.5 * (d as f64 * LN_2PI + self.log_det + self.mahalanobis_sq(x))
    }

    /// `(x − μ)ᵀ Σ⁻¹ (x − μ)` by forward substitution.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= row[j] * z[j];
            }
            z[i] = s / row[i];
            acc += z[i] * z[i];
        }
        acc
    }

    /// Writes one draw into `out` via `μ + L z`.
    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        self.transform_standard(&z, out);
    }

    /// Maps a standard normal vector `z` to `μ + L z`.
    pub fn transform_standard(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            out[i] = self.mean[i] + row.iter().zip(z).map(|(l, z)| l * z).sum::<f64>();
        }
    }

    /// Symmetric PSD square root of the covariance.
    pub fn sqrt_cov(&self) -> Result<DMatrix<f64>> {
        sqrtm_psd(&self.cov)
    }
}

fn check_dims(p: &Gaussian, q: &Gaussian) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(())
}

/// Row-major lower Cholesky factor, or `None` when a pivot is not positive.
fn cholesky(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let d = a.nrows();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Principal square root of a symmetric PSD matrix; negative round-off
/// eigenvalues are clamped to zero.
pub fn sqrtm_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen);
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0).ok_or(Error::Eigen)?;
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&vals) * v.transpose())
}

/// `KL(p ‖ q)` between Gaussians, clamped at zero against round-off.
pub fn kl_divergence(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dims(p, q)?;
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &Gaussian, q: &Gaussian) -> f64 {
    let d = p.dim();
    // tr(Σq⁻¹ Σp) = ‖Lq⁻¹ Lp‖²_F, column by column.
    let mut trace = 0.0;
    let mut col = vec![0.0; d];
    let mut z = vec![0.0; d];
    for c in 0..d {
        for r in 0..d {
            col[r] = if r >= c { p.chol[r * d + c] } else { 0.0 };
        }
        for i in 0..d {
            let row = &q.chol[i * d..i * d + i + 1];
            let mut s = col[i];
            for j in 0..i {
                s -= row[j] * z[j];
            }
            z[i] = s / row[i];
            trace += z[i] * z[i];
        }
    }
    let maha = q.mahalanobis_sq(p.mean.as_slice());
    let kl = 0.5 * (trace + maha - d as f64 + q.log_det - p.log_det);
    kl.max(0.0)
}

/// `‖μp − μq‖₂ + ‖Σp^{1/2} − Σq^{1/2}‖_F`.
pub fn ground_distance(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dims(p, q)?;
    let roots = (p.sqrt_cov()?, q.sqrt_cov()?);
    Ok(ground_distance_with_roots(p, &roots.0, q, &roots.1))
}

pub(crate) fn ground_distance_with_roots(
    p: &Gaussian,
    p_root: &DMatrix<f64>,
    q: &Gaussian,
    q_root: &DMatrix<f64>,
) -> f64 {
    (&p.mean - &q.mean).norm() + (p_root - q_root).norm()
}

/// Minimizer over Gaussians `η` of `Σ λ_m KL(ν_m ‖ η)`: moment matching of
/// the weighted components.
pub fn kl_barycenter(gs: &[Gaussian], lambdas: &[f64]) -> Result<Gaussian> {
    if gs.is_empty() {
        return Err(Error::InvalidArgument("barycenter of empty list".into()));
    }
    if gs.len() != lambdas.len() {
        return Err(Error::DimensionMismatch {
            expected: gs.len(),
            got: lambdas.len(),
        });
    }
    if let Some(&l) = lambdas.iter().find(|&&l| l < 0.0 || !l.is_finite()) {
        return Err(Error::NegativeWeight(l));
    }
    let total: f64 = lambdas.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::WeightSum(total));
    }
    let d = gs[0].dim();
    for g in gs {
        if g.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: g.dim(),
            });
        }
    }
    moment_match(gs.iter().zip(lambdas.iter().copied()), d)
}

/// Moment matching without the simplex check; weights are used as given.
pub(crate) fn moment_match<'a>(
    parts: impl Iterator<Item = (&'a Gaussian, f64)> + Clone,
    d: usize,
) -> Result<Gaussian> {
    let mut mean = DVector::zeros(d);
    for (g, l) in parts.clone() {
        mean.axpy(l, &g.mean, 1.0);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (g, l) in parts {
        if l == 0.0 {
            continue;
        }
        let diff = &g.mean - &mean;
        cov += (&g.cov + &diff * diff.transpose()) * l;
    }
    Gaussian::new(mean, cov)
}
