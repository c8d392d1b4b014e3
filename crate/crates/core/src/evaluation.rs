//! Classification metrics, stratified cross-validation over tuning grids, and
//! the replicated Monte Carlo comparison of the sparse rule against baselines.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_ridge_lda, fit_ridge_qda, pooled_covariance, sample_moments, BaselineModel, LinearRule, PlugInRule};
use crate::classifier::{log_det_term, BinaryClassifier, ClassMoments, DiscriminantModel, FitOptions, Label};
use crate::dantzig::{rate_scale, solve_differential_path, solve_direction_path, PathResult, SolverOptions};
use crate::datagen::{
    derive_seed, make_population, make_precision, rng_from, sample, Family, PopulationSpec, PrecisionKind,
    PrecisionModel,
};
use crate::error::{Error, Result};
use crate::serde_mat;
use crate::sample::SampleMatrix;

/// Confusion table with class 2 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::invalid("metrics need at least one label"));
        }
        let mut c = Self::default();
        for (&t, &y) in truth.iter().zip(predicted) {
            match (t, y) {
                (2, 2) => c.tp += 1,
                (1, 1) => c.tn += 1,
                (1, 2) => c.fp += 1,
                (2, 1) => c.fn_ += 1,
                _ => return Err(Error::invalid(format!("labels must be 1 or 2, found ({t}, {y})"))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn metrics(&self) -> BinaryMetrics {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let specificity = ratio(self.tn, self.tn + self.fp);
        let sensitivity = ratio(self.tp, self.tp + self.fn_);
        let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        let mcc = if den > 0.0 {
            Some(((tp * tn - fp * fn_) / den.sqrt()).clamp(-1.0, 1.0))
        } else {
            None
        };
        BinaryMetrics {
            error_rate: ratio(self.fp + self.fn_, self.total()).unwrap_or(0.0),
            specificity: specificity.unwrap_or(0.0),
            sensitivity: sensitivity.unwrap_or(0.0),
            mcc: mcc.unwrap_or(0.0),
            degenerate: specificity.is_none() || sensitivity.is_none() || mcc.is_none(),
        }
    }
}

/// Error rate, specificity, sensitivity and MCC of one labelled prediction.
/// A metric whose denominator vanishes is reported as 0 and sets `degenerate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub error_rate: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub mcc: f64,
    pub degenerate: bool,
}

pub fn metrics(truth: &[Label], predicted: &[Label]) -> Result<BinaryMetrics> {
    ConfusionCounts::from_labels(truth, predicted).map(|c| c.metrics())
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// Candidate values for the differential (`lambda1`) and direction
/// (`lambda2`) constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl TuningGrid {
    /// The same log-spaced grid `scale · [lo, hi]` for both constraints.
    pub fn log_spaced(lo: f64, hi: f64, points: usize, scale: f64) -> Result<Self> {
        let values = log_spaced(lo, hi, points, scale)?;
        Ok(Self {
            lambda1: values.clone(),
            lambda2: values,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1.is_empty() || self.lambda2.is_empty() {
            return Err(Error::invalid("tuning grid must be nonempty"));
        }
        if self.lambda1.iter().chain(&self.lambda2).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("tuning values must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// `points` values from `scale·lo` to `scale·hi`, evenly spaced in log scale.
pub fn log_spaced(lo: f64, hi: f64, points: usize, scale: f64) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(Error::invalid("grid needs at least one point"));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite() && scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("invalid grid range [{lo}, {hi}] with scale {scale}")));
    }
    if points == 1 {
        return Ok(vec![lo * scale]);
    }
    let step = (hi / lo).ln() / (points - 1) as f64;
    Ok((0..points).map(|i| scale * lo * (step * i as f64).exp()).collect())
}

/// One train/validation split of both classes.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train1: SampleMatrix,
    pub train2: SampleMatrix,
    pub valid1: SampleMatrix,
    pub valid2: SampleMatrix,
}

/// Validation-fold index sets per class, shuffled with `seed` and dealt
/// round-robin so fold sizes differ by at most one.
pub fn stratified_folds(n1: usize, n2: usize, folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    for n in [n1, n2] {
        let largest = n.div_ceil(folds);
        if n < folds || n - largest < 3 {
            return Err(Error::InsufficientSamples {
                required: folds.max(3 + largest),
                found: n,
            });
        }
    }
    let mut rng = rng_from(seed);
    let mut deal = |n: usize| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut out = vec![Vec::new(); folds];
        for (k, i) in idx.into_iter().enumerate() {
            out[k % folds].push(i);
        }
        out.iter_mut().for_each(|f| f.sort_unstable());
        out
    };
    let a = deal(n1);
    let b = deal(n2);
    Ok(a.into_iter().zip(b).collect())
}

fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    held.iter().for_each(|&i| keep[i] = false);
    (0..n).filter(|&i| keep[i]).collect()
}

/// Cross-validation surface and the selected pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Row (`lambda1`) and column (`lambda2`) of the selection.
    pub index: (usize, usize),
    /// Mean validation error; infinite where a grid point failed in some fold.
    #[serde(with = "serde_mat::matrix")]
    pub errors: DMatrix<f64>,
    /// Grid points sharing the minimal error.
    pub ties: usize,
}

/// Stratified K-fold search. `fitter` returns, for one fold, the number of
/// misclassified validation points at every grid pair (`∞` on failure).
/// The pair with the least total error wins; ties go to the smallest
/// `lambda1`, then the smallest `lambda2`.
pub fn cross_validate<F>(
    train1: &SampleMatrix,
    train2: &SampleMatrix,
    grid: &TuningGrid,
    folds: usize,
    seed: u64,
    mut fitter: F,
) -> Result<CvResult>
where
    F: FnMut(&Fold, &TuningGrid) -> Result<DMatrix<f64>>,
{
    grid.validate()?;
    if train1.p() != train2.p() {
        return Err(Error::DimensionMismatch {
            expected: train1.p(),
            found: train2.p(),
        });
    }
    let splits = stratified_folds(train1.n(), train2.n(), folds, seed)?;
    let shape = (grid.lambda1.len(), grid.lambda2.len());
    let mut total = DMatrix::zeros(shape.0, shape.1);
    for (held1, held2) in &splits {
        let fold = Fold {
            train1: train1.select_rows(&complement(train1.n(), held1))?,
            train2: train2.select_rows(&complement(train2.n(), held2))?,
            valid1: train1.select_rows(held1)?,
            valid2: train2.select_rows(held2)?,
        };
        let counts = fitter(&fold, grid)?;
        if counts.shape() != shape {
            return Err(Error::invalid(format!(
                "fold evaluator returned a {:?} surface for a {:?} grid",
                counts.shape(),
                shape
            )));
        }
        total += counts;
    }
    let errors = total / (train1.n() + train2.n()) as f64;
    select(grid, errors)
}

fn select(grid: &TuningGrid, errors: DMatrix<f64>) -> Result<CvResult> {
    let best = errors.iter().copied().filter(|e| e.is_finite()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::Numerical("every grid point failed during cross-validation".into()));
    }
    let mut ties = 0;
    let mut pick: Option<(usize, usize)> = None;
    for i in 0..errors.nrows() {
        for j in 0..errors.ncols() {
            if errors[(i, j)] != best {
                continue;
            }
            ties += 1;
            let key = (grid.lambda1[i], grid.lambda2[j]);
            if pick.is_none_or(|(a, b)| key < (grid.lambda1[a], grid.lambda2[b])) {
                pick = Some((i, j));
            }
        }
    }
    let (i, j) = pick.expect("a finite minimum exists");
    Ok(CvResult {
        lambda1: grid.lambda1[i],
        lambda2: grid.lambda2[j],
        index: (i, j),
        errors,
        ties,
    })
}

/// Outcome tallies over every Dantzig solve of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: usize,
    /// Certified optimal within tolerance.
    pub converged: usize,
    /// Returned but without a closing certificate.
    pub uncertified: usize,
    pub infeasible: usize,
    /// Beyond the path budget.
    pub unreached: usize,
    /// Largest `‖Ax − b‖_∞ − λ` over converged solves.
    pub max_violation: f64,
}

impl SolverStats {
    fn record<S>(&mut self, result: &PathResult<S>) {
        self.solves += 1;
        match result {
            Ok(r) if r.converged => {
                self.converged += 1;
                self.max_violation = self.max_violation.max(r.feasibility_residual - r.lambda);
            }
            Ok(_) => self.uncertified += 1,
            Err(Error::Infeasible(_)) => self.infeasible += 1,
            Err(_) => self.unreached += 1,
        }
    }

    pub fn merge(&mut self, other: &SolverStats) {
        self.solves += other.solves;
        self.converged += other.converged;
        self.uncertified += other.uncertified;
        self.infeasible += other.infeasible;
        self.unreached += other.unreached;
        self.max_violation = self.max_violation.max(other.max_violation);
    }
}

fn usable<S: Clone>(result: &PathResult<S>) -> Option<S> {
    match result {
        Ok(r) if r.converged => Some(r.solution.clone()),
        _ => None,
    }
}

/// Homotopy budget used while tuning, proportional to the dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCap {
    pub active_per_dim: usize,
    pub pivots_per_dim: usize,
}

impl Default for PathCap {
    fn default() -> Self {
        Self {
            active_per_dim: 4,
            pivots_per_dim: 30,
        }
    }
}

impl PathCap {
    /// `base` with the homotopy limits tightened to `factor` times the cap.
    pub fn apply(&self, base: &SolverOptions, p: usize, factor: usize) -> SolverOptions {
        SolverOptions {
            max_active: base.max_active.min(self.active_per_dim * p * factor).max(1),
            max_pivots: base.max_pivots.min(self.pivots_per_dim * p * factor).max(1),
            ..*base
        }
    }
}

/// Scores of many rules sharing validation points: rule `(i, j)` scores
/// `quad[i] + lin[j]`, and row `i` is unusable when `quad[i]` is `None`.
fn count_errors(quad: &[Option<DVector<f64>>], lin: &[Option<DVector<f64>>], n1: usize) -> DMatrix<f64> {
    DMatrix::from_fn(quad.len(), lin.len(), |i, j| match (&quad[i], &lin[j]) {
        (Some(q), Some(l)) => (q + l)
            .iter()
            .enumerate()
            .filter(|(k, s)| if *k < n1 { **s <= 0.0 } else { **s > 0.0 })
            .count() as f64,
        _ => f64::INFINITY,
    })
}

fn stacked(valid1: &SampleMatrix, valid2: &SampleMatrix) -> Vec<DVector<f64>> {
    valid1.rows().chain(valid2.rows()).collect()
}

fn linear_scores(
    betas: &[Option<DVector<f64>>],
    c1: &DVector<f64>,
    c2: &DVector<f64>,
    prior: f64,
    points: &[DVector<f64>],
) -> Vec<Option<DVector<f64>>> {
    let mid = (c1 + c2) * 0.5;
    betas
        .iter()
        .map(|b| {
            b.as_ref()
                .map(|b| DVector::from_iterator(points.len(), points.iter().map(|z| -2.0 * b.dot(&(z - &mid)) + prior)))
        })
        .collect()
}

/// Validation misclassification counts of the Dantzig quadratic rule over the
/// grid, from one solution path per constraint.
pub fn quadratic_grid_counts(
    m1: &ClassMoments,
    m2: &ClassMoments,
    valid1: &SampleMatrix,
    valid2: &SampleMatrix,
    grid: &TuningGrid,
    opts: &SolverOptions,
    stats: &mut SolverStats,
) -> Result<DMatrix<f64>> {
    let ds = solve_differential_path(&m1.scatter, &m2.scatter, &grid.lambda1, opts)?;
    let delta = &m2.location - &m1.location;
    let bs = solve_direction_path(&m2.scatter, &delta, &grid.lambda2, opts)?;
    ds.iter().for_each(|r| stats.record(r));
    bs.iter().for_each(|r| stats.record(r));
    let points = stacked(valid1, valid2);
    let quad: Vec<_> = ds
        .iter()
        .map(|r| {
            let d = usable(r)?;
            let logdet = log_det_term(&d, &m1.scatter).ok()?;
            Some(DVector::from_iterator(
                points.len(),
                points.iter().map(|z| {
                    let c = z - &m1.location;
                    c.dot(&(&d * &c)) - logdet
                }),
            ))
        })
        .collect();
    let betas: Vec<_> = bs.iter().map(usable).collect();
    let prior = (m1.n as f64 / m2.n as f64).ln();
    let lin = linear_scores(&betas, &m1.location, &m2.location, prior, &points);
    Ok(count_errors(&quad, &lin, valid1.n()))
}

/// Validation counts of the sparse linear rule; the grid's `lambda1` is ignored
/// and must hold a single placeholder.
fn linear_grid_counts(fold: &Fold, grid: &TuningGrid, opts: &SolverOptions, stats: &mut SolverStats) -> Result<DMatrix<f64>> {
    let (m1, m2) = (sample_moments(&fold.train1), sample_moments(&fold.train2));
    let pooled = pooled_covariance(&fold.train1, &fold.train2);
    let bs = solve_direction_path(&pooled, &(&m2.location - &m1.location), &grid.lambda2, opts)?;
    bs.iter().for_each(|r| stats.record(r));
    let points = stacked(&fold.valid1, &fold.valid2);
    let betas: Vec<_> = bs.iter().map(usable).collect();
    let prior = (m1.n as f64 / m2.n as f64).ln();
    let lin = linear_scores(&betas, &m1.location, &m2.location, prior, &points);
    let quad = vec![Some(DVector::zeros(points.len())); grid.lambda1.len()];
    Ok(count_errors(&quad, &lin, fold.valid1.n()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ssqda,
    Sdar,
    Slda,
    RidgeLda,
    RidgeQda,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sdar, Method::Slda, Method::RidgeLda, Method::RidgeQda, Method::Ssqda];

    /// Row label of the comparison table.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ssqda => "SSQDA",
            Method::Sdar => "SDAR",
            Method::Slda => "SLDA",
            Method::RidgeLda => "LDA",
            Method::RidgeQda => "QDA",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ssqda" => Ok(Method::Ssqda),
            "sdar" => Ok(Method::Sdar),
            "slda" => Ok(Method::Slda),
            "lda" | "ridge_lda" => Ok(Method::RidgeLda),
            "qda" | "ridge_qda" => Ok(Method::RidgeQda),
            _ => Err(Error::invalid(format!("unknown method '{name}'"))),
        }
    }
}

/// Tuning grid constants; values are multiples of the rate scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 0.05,
            hi: 5.0,
            points: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    pub precision: PrecisionKind,
    pub p: usize,
    /// Training size per class.
    pub n: usize,
    pub s1: usize,
    pub s2: usize,
    pub replications: usize,
    pub grid: GridSpec,
    pub folds: usize,
    pub seed: u64,
    /// Test size per class; `None` means `n`.
    pub test_size: Option<usize>,
    pub fit: FitOptions,
    pub path_cap: PathCap,
}

impl ExperimentSpec {
    /// Defaults: 200 per class, sparsities 10, 20 replications, 5 folds.
    pub fn new(family: Family, precision: PrecisionKind, p: usize) -> Self {
        Self {
            family,
            precision,
            p,
            n: 200,
            s1: 10,
            s2: 10,
            replications: 20,
            grid: GridSpec::default(),
            folds: 5,
            seed: 0,
            test_size: None,
            fit: FitOptions::default(),
            path_cap: PathCap::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replication count must be at least 1"));
        }
        if self.p < 2 {
            return Err(Error::invalid("dimension must be at least 2"));
        }
        if self.s2 > self.p || self.s1 > self.p * self.p {
            return Err(Error::invalid("sparsity exceeds the dimension"));
        }
        if self.test_size == Some(0) {
            return Err(Error::invalid("test size must be positive"));
        }
        log_spaced(self.grid.lo, self.grid.hi, self.grid.points, 1.0)?;
        stratified_folds(self.n, self.n, self.folds, 0).map(|_| ())
    }

    pub fn rate_scale(&self) -> f64 {
        rate_scale(self.n, self.p)
    }

    pub fn tuning_grid(&self) -> Result<TuningGrid> {
        TuningGrid::log_spaced(self.grid.lo, self.grid.hi, self.grid.points, self.rate_scale())
    }
}

/// Per-method aggregate over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    /// Successful replications.
    pub replications: usize,
    pub failures: usize,
    pub error_rate: MetricSummary,
    pub specificity: MetricSummary,
    pub sensitivity: MetricSummary,
    pub mcc: MetricSummary,
    /// Replications with a vanishing metric denominator.
    pub degenerate: usize,
    pub per_replication: Vec<BinaryMetrics>,
    /// Selected `(lambda1, lambda2)` per successful tuned replication.
    pub selected: Vec<(f64, f64)>,
    /// Replications whose selection tied with other grid points.
    pub tied_selections: usize,
    pub solver: SolverStats,
    pub failure_messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub rate_scale: f64,
    pub methods: Vec<MetricsReport>,
}

impl ExperimentReport {
    pub fn method(&self, method: Method) -> Option<&MetricsReport> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Methods × metrics, each cell `mean(sd)`.
    pub fn to_text_table(&self) -> String {
        let spec = &self.spec;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} distribution, {} precision, p = {}, n = {} per class, {} replications",
            spec.family.name(),
            spec.precision.name(),
            spec.p,
            spec.n,
            spec.replications
        );
        let _ = writeln!(
            out,
            "{:<8}{:>16}{:>16}{:>16}{:>16}{:>10}",
            "method", "Error rate", "Specificity", "Sensitivity", "Mcc", "failed"
        );
        let cell = |m: &MetricSummary| format!("{:.3}({:.3})", m.mean, m.sd);
        for r in &self.methods {
            let _ = writeln!(
                out,
                "{:<8}{:>16}{:>16}{:>16}{:>16}{:>10}",
                r.method.label(),
                cell(&r.error_rate),
                cell(&r.specificity),
                cell(&r.sensitivity),
                cell(&r.mcc),
                r.failures
            );
        }
        out
    }
}

/// Training and test draws of one replication.
#[derive(Debug, Clone)]
pub struct ReplicateData {
    pub train1: SampleMatrix,
    pub train2: SampleMatrix,
    pub test1: SampleMatrix,
    pub test2: SampleMatrix,
}

/// Seed of the CV fold assignment in replication `r`.
pub fn cv_seed(seed: u64, r: u64) -> u64 {
    derive_seed(seed, &[r, 6])
}

/// Population and samples of replication `r`, from independent seed streams.
pub fn replicate_data(spec: &ExperimentSpec, r: u64) -> Result<ReplicateData> {
    let seed = |stream: u64| derive_seed(spec.seed, &[r, stream]);
    let omega1 = make_precision(&PrecisionModel {
        kind: spec.precision,
        p: spec.p,
        seed: seed(0),
    })?;
    let pop_spec = PopulationSpec {
        s1: spec.s1,
        s2: spec.s2,
        ..PopulationSpec::default()
    };
    let pop = make_population(&omega1, &pop_spec, seed(1))?;
    let m = spec.test_size.unwrap_or(spec.n);
    Ok(ReplicateData {
        train1: sample(&pop, 1, spec.n, spec.family, seed(2))?,
        train2: sample(&pop, 2, spec.n, spec.family, seed(3))?,
        test1: sample(&pop, 1, m, spec.family, seed(4))?,
        test2: sample(&pop, 2, m, spec.family, seed(5))?,
    })
}

/// Any fitted rule of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Ssqda(DiscriminantModel),
    Sdar(DiscriminantModel),
    Slda(LinearRule),
    RidgeLda(PlugInRule),
    RidgeQda(PlugInRule),
}

impl FittedModel {
    pub fn method(&self) -> Method {
        match self {
            FittedModel::Ssqda(_) => Method::Ssqda,
            FittedModel::Sdar(_) => Method::Sdar,
            FittedModel::Slda(_) => Method::Slda,
            FittedModel::RidgeLda(_) => Method::RidgeLda,
            FittedModel::RidgeQda(_) => Method::RidgeQda,
        }
    }

    fn inner(&self) -> &dyn BinaryClassifier {
        match self {
            FittedModel::Ssqda(m) | FittedModel::Sdar(m) => m,
            FittedModel::Slda(m) => m,
            FittedModel::RidgeLda(m) | FittedModel::RidgeQda(m) => m,
        }
    }
}

impl From<BaselineModel> for FittedModel {
    fn from(m: BaselineModel) -> Self {
        match m {
            BaselineModel::Sdar(m) => FittedModel::Sdar(m),
            BaselineModel::Slda(m) => FittedModel::Slda(m),
            BaselineModel::RidgeLda(m) => FittedModel::RidgeLda(m),
            BaselineModel::RidgeQda(m) => FittedModel::RidgeQda(m),
        }
    }
}

impl BinaryClassifier for FittedModel {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn score(&self, z: &DVector<f64>) -> f64 {
        self.inner().score(z)
    }
}

/// How tuned methods pick and fit their constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningOptions {
    pub grid: TuningGrid,
    pub folds: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub path_cap: PathCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedFit {
    pub model: FittedModel,
    /// Constraint levels actually used; `None` for untuned methods.
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    /// Grid points tied with the selection.
    pub ties: usize,
    pub solver: SolverStats,
}

type Moments = fn(&SampleMatrix, &FitOptions) -> Result<ClassMoments>;

fn robust_moments(x: &SampleMatrix, opts: &FitOptions) -> Result<ClassMoments> {
    ClassMoments::robust(x, &opts.median)
}

fn plain_moments(x: &SampleMatrix, _: &FitOptions) -> Result<ClassMoments> {
    Ok(sample_moments(x))
}

/// Grid values at or above `chosen`, ascending.
fn at_or_above(values: &[f64], chosen: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|v| *v >= chosen).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Solution at the smallest reachable value of an ascending list.
fn final_solution<S: Clone>(results: &[PathResult<S>], what: &str) -> Result<(usize, S)> {
    results
        .iter()
        .enumerate()
        .find_map(|(k, r)| usable(r).map(|s| (k, s)))
        .ok_or_else(|| Error::Numerical(format!("no {what} solution at or above the selected level")))
}

fn tuned_quadratic(
    train1: &SampleMatrix,
    train2: &SampleMatrix,
    opts: &TuningOptions,
    moments: Moments,
    stats: &mut SolverStats,
) -> Result<(DiscriminantModel, f64, f64, usize)> {
    let p = train1.p();
    let cv_opts = opts.path_cap.apply(&opts.fit.solver, p, 1);
    let cv = cross_validate(train1, train2, &opts.grid, opts.folds, opts.seed, |fold, grid| {
        let m1 = moments(&fold.train1, &opts.fit)?;
        let m2 = moments(&fold.train2, &opts.fit)?;
        quadratic_grid_counts(&m1, &m2, &fold.valid1, &fold.valid2, grid, &cv_opts, stats)
    })?;
    let m1 = moments(train1, &opts.fit)?;
    let m2 = moments(train2, &opts.fit)?;
    let final_opts = opts.path_cap.apply(&opts.fit.solver, p, 2);
    let l1 = at_or_above(&opts.grid.lambda1, cv.lambda1);
    let l2 = at_or_above(&opts.grid.lambda2, cv.lambda2);
    let ds = solve_differential_path(&m1.scatter, &m2.scatter, &l1, &final_opts)?;
    let bs = solve_direction_path(&m2.scatter, &(&m2.location - &m1.location), &l2, &final_opts)?;
    ds.iter().for_each(|r| stats.record(r));
    bs.iter().for_each(|r| stats.record(r));
    let (i, d) = final_solution(&ds, "differential")?;
    let (j, b) = final_solution(&bs, "direction")?;
    let model = DiscriminantModel::from_parts(d, b, &m1, &m2)?;
    Ok((model, l1[i], l2[j], cv.ties))
}

fn tuned_linear(
    train1: &SampleMatrix,
    train2: &SampleMatrix,
    opts: &TuningOptions,
    stats: &mut SolverStats,
) -> Result<(LinearRule, f64, usize)> {
    let p = train1.p();
    let linear_grid = TuningGrid {
        lambda1: vec![0.0],
        lambda2: opts.grid.lambda2.clone(),
    };
    let cv_opts = opts.path_cap.apply(&opts.fit.solver, p, 1);
    let cv = cross_validate(train1, train2, &linear_grid, opts.folds, opts.seed, |fold, grid| {
        linear_grid_counts(fold, grid, &cv_opts, stats)
    })?;
    let (m1, m2) = (sample_moments(train1), sample_moments(train2));
    let pooled = pooled_covariance(train1, train2);
    let l2 = at_or_above(&opts.grid.lambda2, cv.lambda2);
    let final_opts = opts.path_cap.apply(&opts.fit.solver, p, 2);
    let bs = solve_direction_path(&pooled, &(&m2.location - &m1.location), &l2, &final_opts)?;
    bs.iter().for_each(|r| stats.record(r));
    let (j, beta) = final_solution(&bs, "direction")?;
    let rule = LinearRule {
        beta,
        prior_logratio: (m1.n as f64 / m2.n as f64).ln(),
        center1: m1.location,
        center2: m2.location,
    };
    Ok((rule, l2[j], cv.ties))
}

/// Fits `method`, choosing its constraint levels by cross-validation over
/// `opts.grid`. The final fit uses the smallest grid level at or above the
/// selection that the path budget reaches on the full training data.
pub fn tune_and_fit(method: Method, train1: &SampleMatrix, train2: &SampleMatrix, opts: &TuningOptions) -> Result<TunedFit> {
    let mut solver = SolverStats::default();
    let (model, lambda1, lambda2, ties) = match method {
        Method::Ssqda | Method::Sdar => {
            let moments: Moments = if method == Method::Ssqda { robust_moments } else { plain_moments };
            let (m, l1, l2, ties) = tuned_quadratic(train1, train2, opts, moments, &mut solver)?;
            let model = if method == Method::Ssqda { FittedModel::Ssqda(m) } else { FittedModel::Sdar(m) };
            (model, Some(l1), Some(l2), ties)
        }
        Method::Slda => {
            let (rule, l2, ties) = tuned_linear(train1, train2, opts, &mut solver)?;
            (FittedModel::Slda(rule), None, Some(l2), ties)
        }
        Method::RidgeLda => (fit_ridge_lda(train1, train2)?.into(), None, None, 1),
        Method::RidgeQda => (fit_ridge_qda(train1, train2)?.into(), None, None, 1),
    };
    Ok(TunedFit {
        model,
        lambda1,
        lambda2,
        ties,
        solver,
    })
}

/// Metrics of `model` on class-1 rows `test1` and class-2 rows `test2`.
pub fn evaluate(model: &dyn BinaryClassifier, test1: &SampleMatrix, test2: &SampleMatrix) -> Result<BinaryMetrics> {
    let mut truth = vec![1; test1.n()];
    truth.resize(test1.n() + test2.n(), 2);
    let mut predicted = model.predict(test1)?;
    predicted.extend(model.predict(test2)?);
    metrics(&truth, &predicted)
}

struct Outcome {
    metrics: BinaryMetrics,
    fit: TunedFit,
}

fn run_replication(spec: &ExperimentSpec, methods: &[Method], grid: &TuningGrid, r: u64) -> Vec<Result<Outcome>> {
    let data = match replicate_data(spec, r) {
        Ok(d) => d,
        Err(e) => return methods.iter().map(|_| Err(Error::Generation(e.to_string()))).collect(),
    };
    let opts = TuningOptions {
        grid: grid.clone(),
        folds: spec.folds,
        seed: cv_seed(spec.seed, r),
        fit: spec.fit,
        path_cap: spec.path_cap,
    };
    methods
        .iter()
        .map(|&m| {
            let out = tune_and_fit(m, &data.train1, &data.train2, &opts).and_then(|fit| {
                Ok(Outcome {
                    metrics: evaluate(&fit.model, &data.test1, &data.test2)?,
                    fit,
                })
            });
            if let Err(e) = &out {
                log::warn!("replication {r}: {} failed: {e}", m.label());
            }
            out
        })
        .collect()
}

/// Replicated comparison: per replication a fresh population, training and
/// test sets; tuned methods pick their constants by stratified CV. Fails when
/// more than 10% of the replications of any method error.
pub fn run_experiment(spec: &ExperimentSpec, methods: &[Method]) -> Result<ExperimentReport> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    let grid = spec.tuning_grid()?;
    let per_rep: Vec<_> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(spec, methods, &grid, r))
        .collect();
    let mut reports = Vec::with_capacity(methods.len());
    for (k, &method) in methods.iter().enumerate() {
        let mut solver = SolverStats::default();
        let mut per_replication = Vec::new();
        let mut selected = Vec::new();
        let mut tied_selections = 0;
        let mut failure_messages = Vec::new();
        for (r, rep) in per_rep.iter().enumerate() {
            match &rep[k] {
                Ok(o) => {
                    solver.merge(&o.fit.solver);
                    per_replication.push(o.metrics);
                    if o.fit.lambda2.is_some() {
                        selected.push((o.fit.lambda1.unwrap_or(0.0), o.fit.lambda2.unwrap_or(0.0)));
                        tied_selections += usize::from(o.fit.ties > 1);
                    }
                }
                Err(e) => failure_messages.push(format!("replication {r}: {e}")),
            }
        }
        let failures = failure_messages.len();
        if failures * 10 > spec.replications {
            return Err(Error::Numerical(format!(
                "{} failed in {failures} of {} replications; first: {}",
                method.label(),
                spec.replications,
                failure_messages[0]
            )));
        }
        let column = |f: fn(&BinaryMetrics) -> f64| {
            MetricSummary::from_values(&per_replication.iter().map(f).collect::<Vec<_>>())
        };
        reports.push(MetricsReport {
            method,
            replications: per_replication.len(),
            failures,
            error_rate: column(|m| m.error_rate),
            specificity: column(|m| m.specificity),
            sensitivity: column(|m| m.sensitivity),
            mcc: column(|m| m.mcc),
            degenerate: per_replication.iter().filter(|m| m.degenerate).count(),
            per_replication,
            selected,
            tied_selections,
            solver,
            failure_messages,
        });
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        rate_scale: spec.rate_scale(),
        methods: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn swap(labels: &[Label]) -> Vec<Label> {
        labels.iter().map(|&l| 3 - l).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = [1, 2, 2, 1, 2];
        let m = metrics(&y, &y).unwrap();
        assert_eq!((m.error_rate, m.specificity, m.sensitivity, m.mcc), (0.0, 1.0, 1.0, 1.0));
        assert!(!m.degenerate);
    }

    #[test]
    fn constant_positive_prediction_on_balanced_set() {
        let truth = [1, 1, 1, 2, 2, 2];
        let m = metrics(&truth, &[2; 6]).unwrap();
        assert_eq!((m.error_rate, m.specificity, m.sensitivity, m.mcc), (0.5, 0.0, 1.0, 0.0));
        assert!(m.degenerate);
    }

    #[test]
    fn counts_formula() {
        let c = ConfusionCounts { tp: 3, tn: 4, fp: 1, fn_: 2 };
        let m = c.metrics();
        assert_abs_diff_eq!(m.error_rate, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.specificity, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(m.sensitivity, 0.6, epsilon = 1e-15);
        // (12 - 2) / sqrt(4 * 5 * 5 * 6)
        assert_abs_diff_eq!(m.mcc, 10.0 / 600f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn length_mismatch_and_bad_labels() {
        assert!(matches!(metrics(&[1, 2], &[1]), Err(Error::DimensionMismatch { .. })));
        assert!(metrics(&[], &[]).is_err());
        assert!(metrics(&[1, 3], &[1, 2]).is_err());
    }

    #[test]
    fn summary_uses_sample_sd() {
        let s = MetricSummary::from_values(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_abs_diff_eq!(s.sd, 1.0, epsilon = 1e-15);
        assert_eq!(MetricSummary::from_values(&[0.4]).sd, 0.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_spaced(0.05, 5.0, 8, 2.0).unwrap();
        assert_eq!(g.len(), 8);
        assert_abs_diff_eq!(g[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g[7], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1] / g[0], g[7] / g[6], epsilon = 1e-12);
        assert!(log_spaced(1.0, 0.5, 3, 1.0).is_err());
        assert!(log_spaced(0.1, 1.0, 0, 1.0).is_err());
    }

    #[test]
    fn folds_partition_each_class() {
        let folds = stratified_folds(23, 17, 5, 9).unwrap();
        assert_eq!(folds.len(), 5);
        let mut a: Vec<usize> = folds.iter().flat_map(|f| f.0.clone()).collect();
        let mut b: Vec<usize> = folds.iter().flat_map(|f| f.1.clone()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, (0..23).collect::<Vec<_>>());
        assert_eq!(b, (0..17).collect::<Vec<_>>());
        for (f1, f2) in &folds {
            assert!((4..=5).contains(&f1.len()));
            assert!((3..=4).contains(&f2.len()));
        }
        assert_eq!(folds, stratified_folds(23, 17, 5, 9).unwrap());
        assert!(stratified_folds(23, 17, 1, 9).is_err());
        assert!(stratified_folds(4, 17, 2, 9).is_err());
    }

    fn toy(n: usize, shift: f64) -> SampleMatrix {
        SampleMatrix::new(DMatrix::from_fn(n, 2, |i, j| shift + ((i * 7 + j * 3) % 5) as f64)).unwrap()
    }

    #[test]
    fn single_candidate_grid_is_returned() {
        let grid = TuningGrid {
            lambda1: vec![0.3],
            lambda2: vec![0.7],
        };
        let cv = cross_validate(&toy(10, 0.0), &toy(10, 1.0), &grid, 2, 1, |f, _| {
            Ok(DMatrix::from_element(1, 1, f.valid1.n() as f64))
        })
        .unwrap();
        assert_eq!((cv.lambda1, cv.lambda2, cv.index), (0.3, 0.7, (0, 0)));
        assert_abs_diff_eq!(cv.errors[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ties_prefer_the_smallest_pair_and_failures_are_skipped() {
        let grid = TuningGrid {
            lambda1: vec![0.9, 0.2, 0.5],
            lambda2: vec![0.4, 0.1],
        };
        let surface = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, f64::INFINITY, 1.0, 2.0, 1.0]);
        let cv = select(&grid, surface).unwrap();
        assert_eq!(cv.index, (1, 1));
        assert_eq!(cv.ties, 4);
        let all_failed = DMatrix::from_element(3, 2, f64::INFINITY);
        assert!(select(&grid, all_failed).is_err());
    }

    #[test]
    fn selection_is_an_argmin() {
        let grid = TuningGrid::log_spaced(0.1, 1.0, 4, 1.0).unwrap();
        let cv = cross_validate(&toy(15, 0.0), &toy(15, 2.0), &grid, 3, 4, |_, g| {
            Ok(DMatrix::from_fn(g.lambda1.len(), g.lambda2.len(), |i, j| ((i + 2 * j) % 3) as f64 + (i == 2) as usize as f64))
        })
        .unwrap();
        let best = cv.errors[cv.index];
        assert!(cv.errors.iter().all(|e| best <= *e));
    }

    #[test]
    fn cap_scales_with_dimension() {
        let base = SolverOptions::default();
        let capped = PathCap::default().apply(&base, 50, 1);
        assert_eq!((capped.max_active, capped.max_pivots), (200, 1500));
        let doubled = PathCap::default().apply(&base, 50, 2);
        assert_eq!((doubled.max_active, doubled.max_pivots), (400, 3000));
    }

    #[test]
    fn spec_validation() {
        let mut spec = ExperimentSpec::new(Family::Normal, PrecisionKind::ar1(), 10);
        assert!(spec.validate().is_ok());
        spec.replications = 0;
        assert!(spec.validate().is_err());
        spec.replications = 1;
        spec.grid.points = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn single_replication_is_deterministic() {
        let mut spec = ExperimentSpec::new(Family::Normal, PrecisionKind::ar1(), 8);
        spec.n = 40;
        spec.s1 = 4;
        spec.s2 = 3;
        spec.replications = 1;
        spec.grid.points = 3;
        spec.seed = 11;
        let a = run_experiment(&spec, &Method::ALL).unwrap();
        let b = run_experiment(&spec, &Method::ALL).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.methods.len(), 5);
        for m in &a.methods {
            assert_eq!(m.replications + m.failures, 1);
        }
        let text = a.to_text_table();
        assert!(text.contains("SSQDA") && text.contains("Error rate"));
        let json = serde_json::to_string(&a).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.methods[0].per_replication, a.methods[0].per_replication);
    }

    fn labels(len: usize) -> impl Strategy<Value = (Vec<Label>, Vec<Label>)> {
        (prop::collection::vec(1usize..=2, len), prop::collection::vec(1usize..=2, len))
    }

    proptest! {
        #[test]
        fn permutation_invariant((truth, pred) in (1usize..40).prop_flat_map(labels), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..truth.len()).collect();
            idx.shuffle(&mut rng_from(seed));
            let t2: Vec<Label> = idx.iter().map(|&i| truth[i]).collect();
            let p2: Vec<Label> = idx.iter().map(|&i| pred[i]).collect();
            prop_assert_eq!(metrics(&truth, &pred).unwrap(), metrics(&t2, &p2).unwrap());
        }

        #[test]
        fn label_swap_exchanges_rates((truth, pred) in (1usize..40).prop_flat_map(labels)) {
            let a = metrics(&truth, &pred).unwrap();
            let b = metrics(&swap(&truth), &swap(&pred)).unwrap();
            prop_assert_eq!(a.error_rate, b.error_rate);
            prop_assert_eq!(a.specificity, b.sensitivity);
            prop_assert_eq!(a.sensitivity, b.specificity);
            prop_assert!((a.mcc.abs() - b.mcc.abs()).abs() < 1e-12);
        }

        #[test]
        fn constant_predictions_have_zero_mcc((truth, _) in (1usize..40).prop_flat_map(labels), label in 1usize..=2) {
            let m = metrics(&truth, &vec![label; truth.len()]).unwrap();
            prop_assert_eq!(m.mcc, 0.0);
            prop_assert!(m.degenerate);
            prop_assert!((-1.0..=1.0).contains(&m.mcc));
        }
    }
}
