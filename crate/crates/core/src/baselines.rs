//! Competitor classifiers: the sample-moment Dantzig QDA (SDAR), the direct
//! sparse LDA (SLDA), and ridge-regularized plug-in LDA and QDA.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classifier::{
    fit_from_moments, solve_pair_direction, BinaryClassifier, ClassMoments, DiscriminantModel, FitDiagnostics,
    SolveSummary,
};
use crate::dantzig::SolverOptions;
use crate::error::{Error, Result};
use crate::linalg::{column_means, sample_covariance, spd_inverse, spd_log_det, symmetrize};
use crate::sample::SampleMatrix;
use crate::serde_mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Sdar,
    Slda,
    RidgeLda,
    RidgeQda,
}

/// Sparse linear rule `−2βᵀ(z − (x̄₁+x̄₂)/2) + log(n₁/n₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRule {
    #[serde(with = "serde_mat::vector")]
    pub beta: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub center1: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub center2: DVector<f64>,
    pub prior_logratio: f64,
}

/// Plug-in Gaussian rule with explicit precision matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugInRule {
    #[serde(with = "serde_mat::vector")]
    pub mean1: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub mean2: DVector<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub precision1: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub precision2: DMatrix<f64>,
    /// `log|Σ₂| − log|Σ₁|` of the regularized covariances.
    pub logdet_diff: f64,
    /// `log(π̂₁/π̂₂)`.
    pub prior_logratio: f64,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    Sdar(DiscriminantModel),
    Slda(LinearRule),
    RidgeLda(PlugInRule),
    RidgeQda(PlugInRule),
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Sdar(_) => BaselineKind::Sdar,
            BaselineModel::Slda(_) => BaselineKind::Slda,
            BaselineModel::RidgeLda(_) => BaselineKind::RidgeLda,
            BaselineModel::RidgeQda(_) => BaselineKind::RidgeQda,
        }
    }
}

impl BinaryClassifier for LinearRule {
    fn dim(&self) -> usize {
        self.beta.len()
    }

    fn score(&self, z: &DVector<f64>) -> f64 {
        let midpoint = (&self.center1 + &self.center2) * 0.5;
        -2.0 * self.beta.dot(&(z - midpoint)) + self.prior_logratio
    }
}

impl BinaryClassifier for PlugInRule {
    fn dim(&self) -> usize {
        self.mean1.len()
    }

    /// `2(log π̂₁f̂₁(z) − log π̂₂f̂₂(z))`.
    fn score(&self, z: &DVector<f64>) -> f64 {
        let a = z - &self.mean1;
        let b = z - &self.mean2;
        b.dot(&(&self.precision2 * &b)) - a.dot(&(&self.precision1 * &a)) + self.logdet_diff + 2.0 * self.prior_logratio
    }
}

impl BinaryClassifier for BaselineModel {
    fn dim(&self) -> usize {
        match self {
            BaselineModel::Sdar(m) => m.dim(),
            BaselineModel::Slda(m) => m.dim(),
            BaselineModel::RidgeLda(m) | BaselineModel::RidgeQda(m) => m.dim(),
        }
    }

    fn score(&self, z: &DVector<f64>) -> f64 {
        match self {
            BaselineModel::Sdar(m) => m.score(z),
            BaselineModel::Slda(m) => m.score(z),
            BaselineModel::RidgeLda(m) | BaselineModel::RidgeQda(m) => m.score(z),
        }
    }
}

fn check_training(class1: &SampleMatrix, class2: &SampleMatrix) -> Result<()> {
    class1.require_min_rows(2)?;
    class2.require_min_rows(2)?;
    if class1.p() != class2.p() {
        return Err(Error::DimensionMismatch {
            expected: class1.p(),
            found: class2.p(),
        });
    }
    Ok(())
}

/// Sample mean and unbiased sample covariance.
pub fn sample_moments(samples: &SampleMatrix) -> ClassMoments {
    ClassMoments {
        location: column_means(samples.data()),
        scatter: sample_covariance(samples.data()),
        n: samples.n(),
        trace_clamped: false,
    }
}

/// Pooled covariance with denominator `n₁ + n₂ − 2`.
pub fn pooled_covariance(class1: &SampleMatrix, class2: &SampleMatrix) -> DMatrix<f64> {
    let (n1, n2) = (class1.n() as f64, class2.n() as f64);
    let s1 = sample_covariance(class1.data()) * (n1 - 1.0);
    let s2 = sample_covariance(class2.data()) * (n2 - 1.0);
    symmetrize(&((s1 + s2) / (n1 + n2 - 2.0)))
}

/// `√(log p / n)` with `n = min(n₁, n₂)`.
pub fn ridge_level(p: usize, n1: usize, n2: usize) -> f64 {
    ((p as f64).ln().max(0.0) / n1.min(n2) as f64).sqrt()
}

pub fn fit_sdar_with_diagnostics(
    class1: &SampleMatrix,
    class2: &SampleMatrix,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<(BaselineModel, FitDiagnostics)> {
    check_training(class1, class2)?;
    let (m, diag) = fit_from_moments(&sample_moments(class1), &sample_moments(class2), lambda1, lambda2, opts)?;
    Ok((BaselineModel::Sdar(m), diag))
}

/// Dantzig QDA on sample means and sample covariances.
pub fn fit_sdar(
    class1: &SampleMatrix,
    class2: &SampleMatrix,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<BaselineModel> {
    fit_sdar_with_diagnostics(class1, class2, lambda1, lambda2, opts).map(|(m, _)| m)
}

pub fn fit_slda_with_diagnostics(
    class1: &SampleMatrix,
    class2: &SampleMatrix,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<(BaselineModel, SolveSummary)> {
    check_training(class1, class2)?;
    let mut m1 = sample_moments(class1);
    let m2 = sample_moments(class2);
    m1.scatter = pooled_covariance(class1, class2);
    let report = solve_pair_direction(&m1.scatter, &m1, &m2, lambda, opts)?;
    let summary = SolveSummary::from(&report);
    let rule = LinearRule {
        beta: report.solution,
        center1: m1.location,
        center2: m2.location,
        prior_logratio: (class1.n() as f64 / class2.n() as f64).ln(),
    };
    Ok((BaselineModel::Slda(rule), summary))
}

/// Direct sparse LDA: `min ‖β‖₁ s.t. ‖Σ̂_pool β − (x̄₂ − x̄₁)‖_∞ ≤ λ`.
pub fn fit_slda(class1: &SampleMatrix, class2: &SampleMatrix, lambda: f64, opts: &SolverOptions) -> Result<BaselineModel> {
    fit_slda_with_diagnostics(class1, class2, lambda, opts).map(|(m, _)| m)
}

fn regularize(cov: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    cov + DMatrix::identity(cov.nrows(), cov.ncols()) * ridge
}

/// Plug-in LDA on the pooled covariance plus `√(log p/n)·I`.
pub fn fit_ridge_lda(class1: &SampleMatrix, class2: &SampleMatrix) -> Result<BaselineModel> {
    check_training(class1, class2)?;
    let ridge = ridge_level(class1.p(), class1.n(), class2.n());
    let cov = regularize(&pooled_covariance(class1, class2), ridge);
    let precision = spd_inverse(&cov, "regularized pooled covariance")
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(BaselineModel::RidgeLda(PlugInRule {
        mean1: column_means(class1.data()),
        mean2: column_means(class2.data()),
        precision1: precision.clone(),
        precision2: precision,
        logdet_diff: 0.0,
        prior_logratio: (class1.n() as f64 / class2.n() as f64).ln(),
        ridge,
    }))
}

/// Plug-in QDA on per-class covariances plus `√(log p/n)·I`.
pub fn fit_ridge_qda(class1: &SampleMatrix, class2: &SampleMatrix) -> Result<BaselineModel> {
    check_training(class1, class2)?;
    let ridge = ridge_level(class1.p(), class1.n(), class2.n());
    let cov1 = regularize(&sample_covariance(class1.data()), ridge);
    let cov2 = regularize(&sample_covariance(class2.data()), ridge);
    let numerical = |e: Error| Error::Numerical(e.to_string());
    let precision1 = spd_inverse(&cov1, "regularized covariance 1").map_err(numerical)?;
    let precision2 = spd_inverse(&cov2, "regularized covariance 2").map_err(numerical)?;
    let logdet_diff = spd_log_det(&cov2, "covariance 2").map_err(numerical)?
        - spd_log_det(&cov1, "covariance 1").map_err(numerical)?;
    Ok(BaselineModel::RidgeQda(PlugInRule {
        mean1: column_means(class1.data()),
        mean2: column_means(class2.data()),
        precision1,
        precision2,
        logdet_diff,
        prior_logratio: (class1.n() as f64 / class2.n() as f64).ln(),
        ridge,
    }))
}
