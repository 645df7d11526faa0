//! Principal component projection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// D×dims, columns sorted by decreasing eigenvalue
    pub components: DMatrix<f64>,
    /// all D eigenvalues of the sample covariance, decreasing
    pub eigenvalues: Vec<f64>,
    /// N×dims projections of the centred data
    pub scores: DMatrix<f64>,
}

impl Pca {
    /// Fraction of total variance captured by the kept components.
    pub fn explained(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total == 0.0 {
            return 1.0;
        }
        self.eigenvalues[..self.components.ncols()]
            .iter()
            .map(|v| v.max(0.0))
            .sum::<f64>()
            / total
    }

    /// Map scores back to the original coordinates.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut x = &self.scores * self.components.transpose();
        for mut r in x.row_iter_mut() {
            r += self.mean.transpose();
        }
        x
    }
}

/// Centre `x` (N×D) and project onto the top `dims` eigenvectors of the
/// sample covariance. Each eigenvector's first nonzero entry is positive.
pub fn pca(x: &DMatrix<f64>, dims: usize) -> CliResult<Pca> {
    let (n, d) = x.shape();
    if dims == 0 || dims > d {
        return Err(CliError::Data(format!(
            "pca dims must be in 1..={d} (got {dims})"
        )));
    }
    if n < 2 {
        return Err(CliError::Data("pca needs at least two rows".into()));
    }
    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.mean()));
    let mut xc = x.clone();
    for mut r in xc.row_iter_mut() {
        r -= mean.transpose();
    }
    let cov = xc.transpose() * &xc / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .total_cmp(&eig.eigenvalues[*a])
            .then(a.cmp(b))
    });
    let mut components = DMatrix::zeros(d, dims);
    for (j, &i) in order.iter().take(dims).enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        let scale = v.amax();
        if let Some(first) = v.iter().copied().find(|e| e.abs() > 1e-12 * scale) {
            if first < 0.0 {
                v.neg_mut();
            }
        }
        components.set_column(j, &v);
    }
    let scores = &xc * &components;
    Ok(Pca {
        mean,
        components,
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        scores,
    })
}
