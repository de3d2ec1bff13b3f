//! Class-conditional Gaussian baseline with a shared covariance, fit on
//! unnormalized features.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ScoreMethod, ScoreParams, ScoreVector};
use crate::bundle::{EmbeddingMatrix, LabelVector};
use crate::error::{Error, Result};

/// Relative ridge used when none is given: `1e-6 * trace(cov) / d`.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisModel {
    pub dim: usize,
    pub num_classes: usize,
    /// `num_classes x dim`, row-major.
    pub means: Vec<f64>,
    /// `dim x dim`, row-major; inverse of the regularized pooled covariance.
    pub precision: Vec<f64>,
    pub ridge: f64,
    pub num_samples: usize,
}

impl MahalanobisModel {
    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn precision_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.precision)
    }

    /// Fewer samples than dimensions: the covariance is rank-deficient and
    /// the ridge dominates.
    pub fn is_underdetermined(&self) -> bool {
        self.num_samples <= self.dim
    }
}

/// Fits per-class means and the shared precision matrix.
///
/// The pooled within-class covariance divides by N. The precision is
/// `(cov + ridge * I)^-1`, obtained from a Cholesky factorization. With
/// `ridge = None` the ridge is `1e-6 * trace(cov) / d`.
pub fn fit_mahalanobis(
    features: &EmbeddingMatrix,
    labels: &LabelVector,
    num_classes: usize,
    ridge: Option<f64>,
) -> Result<MahalanobisModel> {
    let (n, d) = (features.rows(), features.cols());
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    labels.check_range(num_classes)?;
    if let Some(r) = ridge {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ridge must be >= 0, got {r}"
            )));
        }
    }

    let mut counts = vec![0usize; num_classes];
    let mut means = vec![0.0; num_classes * d];
    for (x, &y) in features.iter_rows().zip(labels.as_slice()) {
        counts[y] += 1;
        for (m, v) in means[y * d..(y + 1) * d].iter_mut().zip(x) {
            *m += v;
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(k));
    }
    for (k, &c) in counts.iter().enumerate() {
        for m in &mut means[k * d..(k + 1) * d] {
            *m /= c as f64;
        }
    }

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = DVector::<f64>::zeros(d);
    for (x, &y) in features.iter_rows().zip(labels.as_slice()) {
        for j in 0..d {
            centered[j] = x[j] - means[y * d + j];
        }
        cov.ger(1.0, &centered, &centered, 1.0);
    }
    cov /= n as f64;

    let ridge = ridge.unwrap_or_else(|| DEFAULT_RELATIVE_RIDGE * cov.trace() / d as f64);
    for j in 0..d {
        cov[(j, j)] += ridge;
    }
    let chol = Cholesky::new(cov).ok_or(Error::Factorization { ridge })?;
    let inv = chol.inverse();
    let precision = (&inv + inv.transpose()) * 0.5;

    Ok(MahalanobisModel {
        dim: d,
        num_classes,
        means,
        precision: precision.transpose().as_slice().to_vec(),
        ridge,
        num_samples: n,
    })
}

/// Negative squared Mahalanobis distance to the closest class mean.
pub fn mahalanobis_scores(
    features: &EmbeddingMatrix,
    model: &MahalanobisModel,
) -> Result<ScoreVector> {
    let d = model.dim;
    if features.cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "features have d={} but the model has d={d}",
            features.cols()
        )));
    }
    // precision = L L^T, so (x - mu)^T P (x - mu) = |L^T x - L^T mu|^2.
    let chol = Cholesky::new(model.precision_matrix())
        .ok_or(Error::Factorization { ridge: model.ridge })?;
    let whiten = chol.l().transpose();
    let project = |v: &[f64]| -> DVector<f64> { &whiten * DVector::from_column_slice(v) };
    let projected_means: Vec<DVector<f64>> = (0..model.num_classes)
        .map(|k| project(model.mean(k)))
        .collect();

    let values: Vec<f64> = features
        .data()
        .par_chunks(d)
        .map(|x| {
            let z = project(x);
            projected_means
                .iter()
                .map(|m| -(&z - m).norm_squared())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    ScoreVector::new(
        ScoreMethod::Mahalanobis,
        values,
        ScoreParams {
            ridge: Some(model.ridge),
            ..ScoreParams::default()
        },
    )
}
