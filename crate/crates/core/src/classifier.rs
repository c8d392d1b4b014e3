//! The sparse quadratic rule built from robust scatter estimates, its
//! unequal-prior form, and the multigroup argmin rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dantzig::{
    solve_differential, solve_direction, DifferentialProblem, DirectionProblem, SolverOptions, SolverReport,
};
use crate::error::{Error, Result};
use crate::estimators::{assemble_scatter, MedianOptions};
use crate::linalg::{asymmetry, signed_log_det};
use crate::sample::{check_vector, SampleMatrix};
use crate::serde_mat;

/// Class labels are 1-based; the two-class rule uses 1 and 2.
pub type Label = usize;

/// Anything that scores a point for the two-class problem; positive scores
/// mean class 1, zero and negative scores mean class 2.
pub trait BinaryClassifier {
    fn dim(&self) -> usize;

    fn score(&self, z: &DVector<f64>) -> f64;

    fn classify(&self, z: &DVector<f64>) -> Label {
        if self.score(z) > 0.0 {
            1
        } else {
            2
        }
    }

    fn predict(&self, x: &SampleMatrix) -> Result<Vec<Label>> {
        if x.p() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.p(),
            });
        }
        Ok(x.rows().map(|z| self.classify(&z)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    pub median: MedianOptions,
    pub solver: SolverOptions,
}

/// Location, scatter and size of one training class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMoments {
    pub location: DVector<f64>,
    pub scatter: DMatrix<f64>,
    pub n: usize,
    pub trace_clamped: bool,
}

impl ClassMoments {
    /// Spatial median and `trace_est · sign_cov`.
    pub fn robust(samples: &SampleMatrix, opts: &MedianOptions) -> Result<Self> {
        let est = assemble_scatter(samples, opts)?;
        Ok(Self {
            location: est.median,
            scatter: est.scatter,
            n: samples.n(),
            trace_clamped: est.trace_clamped,
        })
    }
}

/// Fitted two-class quadratic rule
/// `Q(z) = (z−c₁)ᵀD(z−c₁) − 2βᵀ(z − (c₁+c₂)/2) − log|DΣ₁ + I| + log(n₁/n₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantModel {
    #[serde(with = "serde_mat::matrix")]
    pub d_matrix: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub beta: DVector<f64>,
    /// Class-1 location (spatial median for the robust fit).
    #[serde(with = "serde_mat::vector")]
    pub center1: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub center2: DVector<f64>,
    pub logdet_term: f64,
    pub prior_logratio: f64,
}

/// Compact record of one solver run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub lambda: f64,
    pub objective: f64,
    pub feasibility_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<S> From<&SolverReport<S>> for SolveSummary {
    fn from(r: &SolverReport<S>) -> Self {
        Self {
            lambda: r.lambda,
            objective: r.objective,
            feasibility_residual: r.feasibility_residual,
            duality_gap: r.duality_gap,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub differential: SolveSummary,
    pub direction: SolveSummary,
    pub trace_clamped: bool,
}

/// `log|D Σ₁ + I|` through a pivoted LU factorization.
///
/// Fails with [`Error::DegenerateModel`] when the determinant is not positive.
pub fn log_det_term(d_matrix: &DMatrix<f64>, scatter1: &DMatrix<f64>) -> Result<f64> {
    let p = d_matrix.nrows();
    if d_matrix.ncols() != p || scatter1.nrows() != p || scatter1.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: scatter1.nrows(),
        });
    }
    let m = d_matrix * scatter1 + DMatrix::identity(p, p);
    match signed_log_det(&m) {
        Some((sign, log_abs)) if sign > 0.0 && log_abs.is_finite() => Ok(log_abs),
        Some((_, log_abs)) => Err(Error::DegenerateModel(format!(
            "det(D Sigma1 + I) is non-positive (log|det| = {log_abs:.3})"
        ))),
        None => Err(Error::DegenerateModel("D Sigma1 + I is singular".into())),
    }
}

impl DiscriminantModel {
    /// Assembles a model from already estimated parts.
    pub fn from_parts(
        d_matrix: DMatrix<f64>,
        beta: DVector<f64>,
        class1: &ClassMoments,
        class2: &ClassMoments,
    ) -> Result<Self> {
        let logdet_term = log_det_term(&d_matrix, &class1.scatter)?;
        let model = Self {
            d_matrix,
            beta,
            center1: class1.location.clone(),
            center2: class2.location.clone(),
            logdet_term,
            prior_logratio: (class1.n as f64 / class2.n as f64).ln(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.d_matrix.nrows();
        if self.d_matrix.ncols() != p {
            return Err(Error::invalid("d_matrix must be square"));
        }
        for len in [self.beta.len(), self.center1.len(), self.center2.len()] {
            if len != p {
                return Err(Error::DimensionMismatch { expected: p, found: len });
            }
        }
        let finite = self.d_matrix.iter().chain(self.beta.iter()).chain(self.center1.iter()).chain(self.center2.iter()).all(|v| v.is_finite())
            && self.logdet_term.is_finite()
            && self.prior_logratio.is_finite();
        if !finite {
            return Err(Error::invalid("model has non-finite fields"));
        }
        if asymmetry(&self.d_matrix) != 0.0 {
            return Err(Error::invalid("d_matrix must be symmetric"));
        }
        Ok(())
    }

    /// Value of the quadratic rule at `z`.
    pub fn discriminant(&self, z: &DVector<f64>) -> f64 {
        let centered = z - &self.center1;
        let midpoint = (&self.center1 + &self.center2) * 0.5;
        let quad = centered.dot(&(&self.d_matrix * &centered));
        quad - 2.0 * self.beta.dot(&(z - midpoint)) - self.logdet_term + self.prior_logratio
    }

    pub fn checked_discriminant(&self, z: &[f64]) -> Result<f64> {
        check_vector(z, self.dim())?;
        Ok(self.discriminant(&DVector::from_column_slice(z)))
    }
}

impl BinaryClassifier for DiscriminantModel {
    fn dim(&self) -> usize {
        self.d_matrix.nrows()
    }

    fn score(&self, z: &DVector<f64>) -> f64 {
        self.discriminant(z)
    }
}

fn check_pair(class1: &ClassMoments, class2: &ClassMoments) -> Result<usize> {
    let p = class1.location.len();
    if class2.location.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: class2.location.len(),
        });
    }
    Ok(p)
}

/// Solves the differential-matrix problem for the pair.
pub fn solve_pair_differential(
    class1: &ClassMoments,
    class2: &ClassMoments,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SolverReport<DMatrix<f64>>> {
    check_pair(class1, class2)?;
    solve_differential(
        &DifferentialProblem {
            scatter1: class1.scatter.clone(),
            scatter2: class2.scatter.clone(),
            lambda,
        },
        opts,
    )
}

/// Solves `min ‖β‖₁ s.t. ‖Σ β − (c₂ − c₁)‖_∞ ≤ λ` with the given scatter.
pub fn solve_pair_direction(
    scatter: &DMatrix<f64>,
    class1: &ClassMoments,
    class2: &ClassMoments,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SolverReport<DVector<f64>>> {
    check_pair(class1, class2)?;
    solve_direction(
        &DirectionProblem {
            scatter: scatter.clone(),
            delta: &class2.location - &class1.location,
            lambda,
        },
        opts,
    )
}

/// Dantzig-type quadratic rule from arbitrary class moments. Shared by the
/// robust fit and the sample-moment baseline.
pub fn fit_from_moments(
    class1: &ClassMoments,
    class2: &ClassMoments,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<(DiscriminantModel, FitDiagnostics)> {
    let d = solve_pair_differential(class1, class2, lambda1, opts)?;
    let b = solve_pair_direction(&class2.scatter, class1, class2, lambda2, opts)?;
    let diagnostics = FitDiagnostics {
        differential: (&d).into(),
        direction: (&b).into(),
        trace_clamped: class1.trace_clamped || class2.trace_clamped,
    };
    let model = DiscriminantModel::from_parts(d.solution, b.solution, class1, class2)?;
    Ok((model, diagnostics))
}

fn check_training(class1: &SampleMatrix, class2: &SampleMatrix) -> Result<()> {
    class1.require_min_rows(3)?;
    class2.require_min_rows(3)?;
    if class1.p() != class2.p() {
        return Err(Error::DimensionMismatch {
            expected: class1.p(),
            found: class2.p(),
        });
    }
    Ok(())
}

pub fn fit_with_diagnostics(
    class1: &SampleMatrix,
    class2: &SampleMatrix,
    lambda1: f64,
    lambda2: f64,
    opts: &FitOptions,
) -> Result<(DiscriminantModel, FitDiagnostics)> {
    check_training(class1, class2)?;
    let m1 = ClassMoments::robust(class1, &opts.median)?;
    let m2 = ClassMoments::robust(class2, &opts.median)?;
    fit_from_moments(&m1, &m2, lambda1, lambda2, &opts.solver)
}

/// Fits the robust two-class rule.
pub fn fit(
    class1: &SampleMatrix,
    class2: &SampleMatrix,
    lambda1: f64,
    lambda2: f64,
    opts: &FitOptions,
) -> Result<DiscriminantModel> {
    fit_with_diagnostics(class1, class2, lambda1, lambda2, opts).map(|(m, _)| m)
}

/// Terms of `Q̃_k` for one class `k ≥ 2`, all relative to class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTerms {
    #[serde(with = "serde_mat::matrix")]
    pub d_matrix: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub beta: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub center: DVector<f64>,
    pub logdet_term: f64,
    /// `log(n₁ / n_k)`.
    pub prior_logratio: f64,
}

/// Multigroup rule `argmin_k Q̃_k(z)` with `Q̃₁ ≡ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultigroupModel {
    #[serde(with = "serde_mat::vector")]
    pub center1: DVector<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub scatter1: DMatrix<f64>,
    /// Entries for classes 2..=K in order.
    pub groups: Vec<GroupTerms>,
}

impl MultigroupModel {
    pub fn n_classes(&self) -> usize {
        self.groups.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.center1.len()
    }

    /// `Q̃_k(z)` for every class, `k = 1..=K`.
    pub fn scores(&self, z: &DVector<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_classes());
        out.push(0.0);
        for g in &self.groups {
            let centered = z - &g.center;
            let midpoint = (&self.center1 + &g.center) * 0.5;
            let quad = centered.dot(&(&g.d_matrix * &centered));
            out.push(0.5 * quad - g.beta.dot(&(z - midpoint)) - 0.5 * g.logdet_term + g.prior_logratio);
        }
        out
    }

    /// Smallest-index argmin of the class scores.
    pub fn classify(&self, z: &DVector<f64>) -> Label {
        let scores = self.scores(z);
        let mut best = 0;
        for (k, s) in scores.iter().enumerate().skip(1) {
            if *s < scores[best] {
                best = k;
            }
        }
        best + 1
    }

    pub fn predict(&self, x: &SampleMatrix) -> Result<Vec<Label>> {
        if x.p() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.p(),
            });
        }
        Ok(x.rows().map(|z| self.classify(&z)).collect())
    }

    /// For `K = 2`, the two-class model whose rule is `2 · Q̃₂`: the same
    /// quadratic re-centred at class 1, `β = β₂ + D₂(c₂ − c₁)`, and a doubled
    /// prior term. Labels agree with [`classify`](Self::classify) up to ties.
    pub fn as_two_class(&self) -> Result<DiscriminantModel> {
        let [g] = self.groups.as_slice() else {
            return Err(Error::invalid(format!(
                "two-class reduction needs K = 2, model has K = {}",
                self.n_classes()
            )));
        };
        let shift = &g.center - &self.center1;
        Ok(DiscriminantModel {
            d_matrix: g.d_matrix.clone(),
            beta: &g.beta + &g.d_matrix * shift,
            center1: self.center1.clone(),
            center2: g.center.clone(),
            logdet_term: g.logdet_term,
            prior_logratio: 2.0 * g.prior_logratio,
        })
    }
}

/// Fits the multigroup rule. `lambdas` holds one `(λ₁, λ₂)` pair shared by
/// all classes or one pair per class `k = 2..=K`.
pub fn fit_multigroup(
    classes: &[SampleMatrix],
    lambdas: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<MultigroupModel> {
    if classes.len() < 2 {
        return Err(Error::invalid("multigroup fit needs at least two classes"));
    }
    let k_rest = classes.len() - 1;
    if lambdas.len() != 1 && lambdas.len() != k_rest {
        return Err(Error::invalid(format!(
            "expected 1 or {k_rest} tuning pairs, got {}",
            lambdas.len()
        )));
    }
    for c in classes {
        check_training(&classes[0], c)?;
    }
    let moments = classes
        .iter()
        .map(|c| ClassMoments::robust(c, &opts.median))
        .collect::<Result<Vec<_>>>()?;
    let base = &moments[0];
    let mut groups = Vec::with_capacity(k_rest);
    for (idx, mk) in moments.iter().enumerate().skip(1) {
        let (lambda1, lambda2) = lambdas[if lambdas.len() == 1 { 0 } else { idx - 1 }];
        let d = solve_pair_differential(base, mk, lambda1, &opts.solver)?.solution;
        let beta = solve_pair_direction(&base.scatter, base, mk, lambda2, &opts.solver)?.solution;
        let logdet_term = log_det_term(&d, &base.scatter)?;
        groups.push(GroupTerms {
            d_matrix: d,
            beta,
            center: mk.location.clone(),
            logdet_term,
            prior_logratio: (base.n as f64 / mk.n as f64).ln(),
        });
    }
    Ok(MultigroupModel {
        center1: base.location.clone(),
        scatter1: base.scatter.clone(),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn zero_model(p: usize) -> DiscriminantModel {
        DiscriminantModel {
            d_matrix: DMatrix::zeros(p, p),
            beta: DVector::zeros(p),
            center1: DVector::zeros(p),
            center2: DVector::zeros(p),
            logdet_term: 0.0,
            prior_logratio: 0.0,
        }
    }

    #[test]
    fn log_det_of_zero_differential() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(log_det_term(&DMatrix::zeros(2, 2), &s).unwrap(), 0.0);
    }

    #[test]
    fn log_det_diagonal_closed_form() {
        let d = DMatrix::identity(2, 2);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert_abs_diff_eq!(log_det_term(&d, &s).unwrap(), 12f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn log_det_rejects_negative_determinant() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0]));
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert!(matches!(log_det_term(&d, &s), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn log_det_rejects_singular() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-0.5, 0.0]));
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert!(matches!(log_det_term(&d, &s), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn zero_model_scores_zero_and_ties_go_to_class_two() {
        let m = zero_model(3);
        let z = DVector::from_vec(vec![1.0, -4.0, 2.5]);
        assert_eq!(m.discriminant(&z), 0.0);
        assert_eq!(m.classify(&z), 2);
    }

    #[test]
    fn linear_special_case() {
        let mut m = zero_model(2);
        m.beta = DVector::from_vec(vec![1.0, 0.0]);
        let z = DVector::from_vec(vec![0.7, 3.0]);
        assert_abs_diff_eq!(m.discriminant(&z), -1.4, epsilon = 1e-15);
        assert_eq!(m.classify(&DVector::from_vec(vec![-0.5, 0.0])), 1);
    }

    #[test]
    fn hand_built_quadratic() {
        let m = DiscriminantModel {
            d_matrix: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            beta: DVector::from_vec(vec![1.0, 1.0]),
            center1: DVector::from_vec(vec![1.0, 0.0]),
            center2: DVector::from_vec(vec![-1.0, 0.0]),
            logdet_term: 0.3,
            prior_logratio: 0.0,
        };
        // (z−c₁) = (−1, 2): quad = 1·1 + (−1)·4 = −3; midpoint (0,0): βᵀz = 2.
        let want = -3.0 - 2.0 * 2.0 - 0.3;
        assert_abs_diff_eq!(m.discriminant(&DVector::from_vec(vec![0.0, 2.0])), want, epsilon = 1e-15);
    }

    #[test]
    fn unequal_class_sizes_set_prior() {
        let c1 = ClassMoments {
            location: DVector::zeros(2),
            scatter: DMatrix::identity(2, 2),
            n: 30,
            trace_clamped: false,
        };
        let c2 = ClassMoments { n: 10, ..c1.clone() };
        let m = DiscriminantModel::from_parts(DMatrix::zeros(2, 2), DVector::zeros(2), &c1, &c2).unwrap();
        assert_abs_diff_eq!(m.prior_logratio, 3f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn multigroup_ties_go_to_smallest_index() {
        let g = GroupTerms {
            d_matrix: DMatrix::zeros(2, 2),
            beta: DVector::zeros(2),
            center: DVector::zeros(2),
            logdet_term: 0.0,
            prior_logratio: 0.0,
        };
        let m = MultigroupModel {
            center1: DVector::zeros(2),
            scatter1: DMatrix::identity(2, 2),
            groups: vec![g.clone(), g],
        };
        assert_eq!(m.classify(&DVector::from_vec(vec![1.0, 1.0])), 1);
    }

    #[test]
    fn two_class_reduction_doubles_group_score() {
        let g = GroupTerms {
            d_matrix: DMatrix::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.2]),
            beta: DVector::from_vec(vec![0.7, -0.3]),
            center: DVector::from_vec(vec![1.0, 2.0]),
            logdet_term: 0.25,
            prior_logratio: -0.4,
        };
        let m = MultigroupModel {
            center1: DVector::from_vec(vec![-0.5, 0.3]),
            scatter1: DMatrix::identity(2, 2),
            groups: vec![g],
        };
        let two = m.as_two_class().unwrap();
        for z in [[0.0, 0.0], [1.5, -2.0], [-3.0, 4.0], [10.0, 0.1]] {
            let z = DVector::from_row_slice(&z);
            assert_abs_diff_eq!(two.discriminant(&z), 2.0 * m.scores(&z)[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_checks_dimension() {
        let m = zero_model(3);
        let x = SampleMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(m.predict(&x), Err(Error::DimensionMismatch { expected: 3, found: 2 })));
    }
}
