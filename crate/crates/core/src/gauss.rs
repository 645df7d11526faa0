//! Gaussian densities with a cached Cholesky factor.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Fixed-covariance Gaussian: keeps the lower Cholesky factor, the precision
/// and the log normaliser so repeated density calls are cheap.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianKernel {
    pub fn new(cov: &DMatrix<f64>, what: &str) -> Result<Self> {
        let chol = cholesky(cov, None, what)?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = chol.inverse();
        let d = cov.nrows() as f64;
        Ok(Self {
            cov: cov.clone(),
            chol_l,
            precision,
            log_norm: -0.5 * d * LN_2PI - 0.5 * log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// -D/2 log 2π - 1/2 log|Σ|
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Squared Mahalanobis distance (x-μ)ᵀΣ⁻¹(x-μ).
    pub fn mahalanobis(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let diff = x - mean;
        let y = self
            .chol_l
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    pub fn log_density(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis(x, mean)
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let eps = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        mean + &self.chol_l * eps
    }
}

pub(crate) fn cholesky(
    m: &DMatrix<f64>,
    node: Option<usize>,
    what: &str,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Param(format!(
            "{what} must be a non-empty square matrix"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd {
            node,
            what: format!("{what} has non-finite entries"),
        });
    }
    m.clone().cholesky().ok_or_else(|| Error::NotSpd {
        node,
        what: what.to_string(),
    })
}

/// Log of N(x; mean, cov) without caching.
pub fn log_normal_density(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<f64> {
    Ok(GaussianKernel::new(cov, "covariance")?.log_density(x, mean))
}

/// Numerically stable log Σ exp(v).
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of log weights.
pub fn normalise_log(v: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(v);
    v.iter().map(|x| (x - z).exp()).collect()
}
