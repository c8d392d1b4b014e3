//! Constrained ℓ1 recovery of the differential matrix and the discriminant
//! direction:
//!
//! ```text
//! D̃ ∈ argmin ‖Vec(D)‖₁  s.t.  ‖½Σ₁DΣ₂ + ½Σ₂DΣ₁ − Σ₁ + Σ₂‖_max ≤ λ₁
//! β̃ ∈ argmin ‖β‖₁        s.t.  ‖Σ₂β − δ‖_∞ ≤ λ₂
//! ```
//!
//! Both are instances of `min ‖x‖₁ s.t. ‖A x − b‖_∞ ≤ λ`. The default solver
//! follows the exact piecewise-linear solution path in λ with an active-set
//! homotopy; a linearized ADMM that needs only products with the scatter
//! matrices is kept as a fallback and as an alternative method.
//!
//! The differential problem is solved over symmetric `D`. Nothing is lost: if
//! `D` is feasible so is `Dᵀ`, and `(D + Dᵀ)/2` is feasible with no larger ℓ1
//! norm. On symmetric `D` the constraint map is `½(M + Mᵀ)` with `M = Σ₁DΣ₂`.
//!
//! A run counts as converged when the solution violates the constraint by at
//! most `feas_tol` and its objective is within `abs_tol + rel_tol · ‖x‖₁` of a
//! feasible point of the dual `max ⟨y,b⟩ − λ‖y‖₁ s.t. ‖Aᵀy‖_∞ ≤ 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homotopy::{certificate, solve_path, PathLimits, PathOperator, PathPoint};
use crate::linalg::{asymmetry, l1_norm, max_abs, spectral_norm_sym, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Exact active-set path, falling back to ADMM if the path is cut short.
    Homotopy,
    LinearizedAdmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Allowed constraint violation beyond λ.
    pub feas_tol: f64,
    /// ADMM iteration budget.
    pub max_iter: usize,
    /// Residual-balancing updates of `rho`.
    pub adaptive_rho: bool,
    /// ADMM iterations between convergence checks.
    pub check_every: usize,
    /// Homotopy pivot budget.
    pub max_pivots: usize,
    /// Largest support the homotopy may carry.
    pub max_active: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Homotopy,
            rho: 1.0,
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            feas_tol: 1e-6,
            max_iter: 5000,
            adaptive_rho: true,
            check_every: 10,
            max_pivots: 20_000,
            max_active: 2000,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        let positive = [self.rho, self.abs_tol, self.rel_tol, self.feas_tol];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("solver tolerances and rho must be positive"));
        }
        if self.max_iter == 0 || self.check_every == 0 || self.max_pivots == 0 || self.max_active == 0 {
            return Err(Error::invalid("iteration budgets must be positive"));
        }
        Ok(())
    }

    fn limits(&self) -> PathLimits {
        PathLimits {
            max_pivots: self.max_pivots,
            max_active: self.max_active,
            refresh_every: 50,
        }
    }

    fn accepts(&self, primal: f64, dual: f64, violation: f64) -> bool {
        violation <= self.feas_tol && primal - dual <= self.abs_tol + self.rel_tol * primal.max(dual.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport<S> {
    pub solution: S,
    /// ℓ1 norm of the returned solution.
    pub objective: f64,
    /// `‖A x − b‖_∞` of the returned solution.
    pub feasibility_residual: f64,
    pub lambda: f64,
    /// Primal objective minus the best certified dual bound.
    pub duality_gap: f64,
    /// Homotopy pivots or ADMM iterations.
    pub iterations: usize,
    pub converged: bool,
    /// `max |x − xᵀ|` before post-hoc symmetrization (zero for vectors).
    pub asymmetry: f64,
}

impl<S> SolverReport<S> {
    /// True when the constraint holds to within `tol` beyond λ.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.feasibility_residual <= self.lambda + tol
    }
}

/// Operands of the differential-matrix problem.
#[derive(Debug, Clone)]
pub struct DifferentialProblem {
    pub scatter1: DMatrix<f64>,
    pub scatter2: DMatrix<f64>,
    pub lambda: f64,
}

/// Operands of the discriminant-direction problem.
#[derive(Debug, Clone)]
pub struct DirectionProblem {
    pub scatter: DMatrix<f64>,
    pub delta: DVector<f64>,
    pub lambda: f64,
}

/// `√(1/p) + √(log p / n)`.
pub fn rate_scale(n: usize, p: usize) -> f64 {
    let (n, p) = (n as f64, p as f64);
    (1.0 / p).sqrt() + (p.ln() / n).sqrt()
}

/// `base · √sparsity · (√(1/p) + √(log p / n))`.
pub fn lambda_schedule(base_constant: f64, sparsity_hint: f64, n: usize, p: usize) -> f64 {
    base_constant * sparsity_hint.sqrt() * rate_scale(n, p)
}

/// Self-adjoint linear map on matrices of a fixed shape.
trait Operator {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// Upper bound on the operator 2-norm.
    fn norm_bound(&self) -> f64;
}

/// `D ↦ ½(M + Mᵀ)` with `M = Σ₁DΣ₂`, on symmetric `D`.
struct SymmetricSandwich<'a> {
    s1: &'a DMatrix<f64>,
    s2: &'a DMatrix<f64>,
    bound: f64,
}

impl Operator for SymmetricSandwich<'_> {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.s1 * x * self.s2;
        let p = m.nrows();
        DMatrix::from_fn(p, p, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

struct LeftMultiply<'a> {
    s: &'a DMatrix<f64>,
    bound: f64,
}

impl Operator for LeftMultiply<'_> {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.s * x
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

/// The differential problem in upper-triangle coordinates `x_(k,l) = D_kl`,
/// `k ≤ l`, with rows indexed the same way. Off-diagonal coordinates carry
/// weight 2 in the objective.
struct TriangleSandwich<'a> {
    s1: &'a DMatrix<f64>,
    s2: &'a DMatrix<f64>,
    pairs: Vec<(usize, usize)>,
    b: DVector<f64>,
}

impl<'a> TriangleSandwich<'a> {
    fn new(s1: &'a DMatrix<f64>, s2: &'a DMatrix<f64>) -> Self {
        let p = s1.nrows();
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|j| (0..=j).map(move |i| (i, j))).collect();
        let b = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| s1[(i, j)] - s2[(i, j)]));
        Self { s1, s2, pairs, b }
    }

    fn to_matrix(&self, x: &DVector<f64>, off_diagonal_scale: f64) -> DMatrix<f64> {
        let p = self.s1.nrows();
        let mut d = DMatrix::zeros(p, p);
        for (&(i, j), &v) in self.pairs.iter().zip(x.iter()) {
            if i == j {
                d[(i, i)] = v;
            } else {
                d[(i, j)] = v * off_diagonal_scale;
                d[(j, i)] = v * off_diagonal_scale;
            }
        }
        d
    }
}

impl PathOperator for TriangleSandwich<'_> {
    fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn weight(&self, col: usize) -> f64 {
        let (i, j) = self.pairs[col];
        if i == j {
            1.0
        } else {
            2.0
        }
    }

    fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.s1 * self.to_matrix(x, 1.0) * self.s2;
        DVector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(i, j)| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    fn apply_t(&self, y: &DVector<f64>) -> DVector<f64> {
        let g = self.s1 * self.to_matrix(y, 0.5) * self.s2;
        DVector::from_iterator(
            self.pairs.len(),
            self.pairs.iter().map(|&(k, l)| if k == l { g[(k, k)] } else { g[(k, l)] + g[(l, k)] }),
        )
    }

    fn entry(&self, row: usize, col: usize) -> f64 {
        let (i, j) = self.pairs[row];
        let (k, l) = self.pairs[col];
        let (a, b) = (self.s1, self.s2);
        // (i, j) entry of Σ₁ E_kl Σ₂ is Σ₁[i,k]·Σ₂[l,j].
        let m = |i: usize, j: usize| {
            if k == l {
                a[(i, k)] * b[(k, j)]
            } else {
                a[(i, k)] * b[(l, j)] + a[(i, l)] * b[(k, j)]
            }
        };
        0.5 * (m(i, j) + m(j, i))
    }
}

struct VectorSystem<'a> {
    s: &'a DMatrix<f64>,
    b: DVector<f64>,
}

impl PathOperator for VectorSystem<'_> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn weight(&self, _col: usize) -> f64 {
        1.0
    }

    fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.s * x
    }

    fn apply_t(&self, y: &DVector<f64>) -> DVector<f64> {
        self.s * y
    }

    fn entry(&self, row: usize, col: usize) -> f64 {
        self.s[(row, col)]
    }
}

/// Full (non-symmetric-aware) constraint residual `‖½Σ₁DΣ₂ + ½Σ₂DΣ₁ − (Σ₁ − Σ₂)‖_max`.
pub fn differential_residual(problem: &DifferentialProblem, d: &DMatrix<f64>) -> f64 {
    let a = (&problem.scatter1 * d * &problem.scatter2 + &problem.scatter2 * d * &problem.scatter1) * 0.5;
    max_abs(&(a - &problem.scatter1 + &problem.scatter2))
}

/// `‖Σβ − δ‖_∞`.
pub fn direction_residual(problem: &DirectionProblem, beta: &DVector<f64>) -> f64 {
    (&problem.scatter * beta - &problem.delta).amax()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!("{what} must be square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    let tol = 1e-9 * (1.0 + max_abs(m));
    if asymmetry(m) > tol {
        return Err(Error::invalid(format!("{what} must be symmetric")));
    }
    Ok(())
}

fn check_differential(scatter1: &DMatrix<f64>, scatter2: &DMatrix<f64>, lambdas: &[f64], opts: &SolverOptions) -> Result<()> {
    opts.validate()?;
    lambdas.iter().try_for_each(|l| check_lambda(*l))?;
    check_symmetric(scatter1, "scatter1")?;
    check_symmetric(scatter2, "scatter2")?;
    if scatter2.nrows() != scatter1.nrows() {
        return Err(Error::DimensionMismatch {
            expected: scatter1.nrows(),
            found: scatter2.nrows(),
        });
    }
    Ok(())
}

fn check_direction(scatter: &DMatrix<f64>, delta: &DVector<f64>, lambdas: &[f64], opts: &SolverOptions) -> Result<()> {
    opts.validate()?;
    lambdas.iter().try_for_each(|l| check_lambda(*l))?;
    check_symmetric(scatter, "scatter")?;
    if delta.len() != scatter.nrows() {
        return Err(Error::DimensionMismatch {
            expected: scatter.nrows(),
            found: delta.len(),
        });
    }
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("delta has non-finite entries"));
    }
    Ok(())
}

/// Outcome of one λ on a solution path.
pub type PathResult<S> = Result<SolverReport<S>>;

fn path_report<O: PathOperator, S>(
    op: &O,
    point: PathPoint,
    lambda: f64,
    opts: &SolverOptions,
    finish: impl Fn(&DVector<f64>) -> (S, f64),
) -> PathResult<S> {
    match point {
        PathPoint::Solved { x, y, pivots } => {
            let (primal, dual, _) = certificate(op, &x, &y, lambda);
            let (solution, residual) = finish(&x);
            let violation = (residual - lambda).max(0.0);
            Ok(SolverReport {
                solution,
                objective: primal,
                feasibility_residual: residual,
                lambda,
                duality_gap: primal - dual,
                iterations: pivots,
                converged: opts.accepts(primal, dual, violation),
                asymmetry: 0.0,
            })
        }
        PathPoint::Infeasible => Err(Error::Infeasible(format!(
            "the constraint set is empty at lambda = {lambda}"
        ))),
        PathPoint::Truncated(why) => {
            log::debug!("solution path truncated at lambda = {lambda}: {why}");
            Err(Error::Convergence {
                iterations: opts.max_pivots,
                residual: f64::NAN,
                last_iterate: Vec::new(),
            })
        }
    }
}

/// Differential-matrix solutions at every λ in `lambdas`, from one homotopy
/// path. Entries the path did not reach are `Err(Convergence)`.
pub fn solve_differential_path(
    scatter1: &DMatrix<f64>,
    scatter2: &DMatrix<f64>,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<PathResult<DMatrix<f64>>>> {
    check_differential(scatter1, scatter2, lambdas, opts)?;
    let s1 = symmetrize(scatter1);
    let s2 = symmetrize(scatter2);
    let op = TriangleSandwich::new(&s1, &s2);
    let points = solve_path(&op, lambdas, &opts.limits());
    let problem = DifferentialProblem {
        scatter1: s1.clone(),
        scatter2: s2.clone(),
        lambda: 0.0,
    };
    Ok(points
        .into_iter()
        .zip(lambdas)
        .map(|(point, &lambda)| {
            path_report(&op, point, lambda, opts, |x| {
                let d = op.to_matrix(x, 1.0);
                let residual = differential_residual(&problem, &d);
                (d, residual)
            })
        })
        .collect())
}

/// Direction solutions at every λ in `lambdas`, from one homotopy path.
pub fn solve_direction_path(
    scatter: &DMatrix<f64>,
    delta: &DVector<f64>,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<PathResult<DVector<f64>>>> {
    check_direction(scatter, delta, lambdas, opts)?;
    let s = symmetrize(scatter);
    let op = VectorSystem { s: &s, b: delta.clone() };
    let points = solve_path(&op, lambdas, &opts.limits());
    Ok(points
        .into_iter()
        .zip(lambdas)
        .map(|(point, &lambda)| {
            path_report(&op, point, lambda, opts, |x| {
                let residual = (&s * x - delta).amax();
                (x.clone(), residual)
            })
        })
        .collect())
}

/// Solves the differential-matrix problem. The returned `D̃` is exactly symmetric.
pub fn solve_differential(
    problem: &DifferentialProblem,
    opts: &SolverOptions,
) -> Result<SolverReport<DMatrix<f64>>> {
    check_differential(&problem.scatter1, &problem.scatter2, &[problem.lambda], opts)?;
    if opts.method == SolverMethod::Homotopy {
        let mut reports = solve_differential_path(&problem.scatter1, &problem.scatter2, &[problem.lambda], opts)?;
        match reports.pop().expect("one lambda") {
            Ok(rep) if rep.converged => return Ok(rep),
            Err(Error::Convergence { .. }) | Ok(_) => log::debug!("homotopy did not certify; falling back to ADMM"),
            Err(e) => return Err(e),
        }
    }
    let s1 = symmetrize(&problem.scatter1);
    let s2 = symmetrize(&problem.scatter2);
    let b = &s1 - &s2;
    let op = SymmetricSandwich {
        bound: spectral_norm_sym(&s1) * spectral_norm_sym(&s2),
        s1: &s1,
        s2: &s2,
    };
    let raw = linearized_admm(&op, &b, problem.lambda, opts)?;
    let asym = asymmetry(&raw.x);
    let d = symmetrize(&raw.x);
    let feasibility_residual = differential_residual(problem, &d);
    Ok(SolverReport {
        objective: l1_norm(&d),
        converged: raw.converged && feasibility_residual <= problem.lambda + opts.feas_tol,
        solution: d,
        feasibility_residual,
        lambda: problem.lambda,
        duality_gap: raw.gap,
        iterations: raw.iterations,
        asymmetry: asym,
    })
}

/// Solves the discriminant-direction problem.
pub fn solve_direction(
    problem: &DirectionProblem,
    opts: &SolverOptions,
) -> Result<SolverReport<DVector<f64>>> {
    check_direction(&problem.scatter, &problem.delta, &[problem.lambda], opts)?;
    if opts.method == SolverMethod::Homotopy {
        let mut reports = solve_direction_path(&problem.scatter, &problem.delta, &[problem.lambda], opts)?;
        match reports.pop().expect("one lambda") {
            Ok(rep) if rep.converged => return Ok(rep),
            Err(Error::Convergence { .. }) | Ok(_) => log::debug!("homotopy did not certify; falling back to ADMM"),
            Err(e) => return Err(e),
        }
    }
    let p = problem.scatter.nrows();
    let s = symmetrize(&problem.scatter);
    let op = LeftMultiply {
        bound: spectral_norm_sym(&s),
        s: &s,
    };
    let b = DMatrix::from_column_slice(p, 1, problem.delta.as_slice());
    let raw = linearized_admm(&op, &b, problem.lambda, opts)?;
    let beta = DVector::from_column_slice(raw.x.as_slice());
    let feasibility_residual = direction_residual(problem, &beta);
    Ok(SolverReport {
        objective: beta.lp_norm(1),
        converged: raw.converged && feasibility_residual <= problem.lambda + opts.feas_tol,
        solution: beta,
        feasibility_residual,
        lambda: problem.lambda,
        duality_gap: raw.gap,
        iterations: raw.iterations,
        asymmetry: 0.0,
    })
}

struct RawSolution {
    x: DMatrix<f64>,
    gap: f64,
    iterations: usize,
    converged: bool,
}

fn soft_threshold_step(x: &mut DMatrix<f64>, grad: &DMatrix<f64>, step: f64, thresh: f64) {
    for (xi, gi) in x.iter_mut().zip(grad.iter()) {
        let v = *xi - step * gi;
        *xi = if v > thresh {
            v - thresh
        } else if v < -thresh {
            v + thresh
        } else {
            0.0
        };
    }
}

/// `b + clip(v − b, −λ, λ)`, the projection onto the ℓ∞ ball around `b`.
fn project_ball(v: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    v.zip_map(b, |vi, bi| bi + (vi - bi).clamp(-lambda, lambda))
}

/// Best dual bound obtainable from the multiplier estimate `y`.
fn dual_bound<O: Operator>(op: &O, y: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> (f64, DMatrix<f64>) {
    let aty = op.apply(y);
    let scale = max_abs(&aty).max(1.0);
    let value = (-y.dot(b) - lambda * l1_norm(y)) / scale;
    (value, aty)
}

fn linearized_admm<O: Operator>(
    op: &O,
    b: &DMatrix<f64>,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<RawSolution> {
    let shape = (b.nrows(), b.ncols());
    let zero = DMatrix::zeros(shape.0, shape.1);
    if max_abs(b) <= lambda {
        return Ok(RawSolution {
            x: zero,
            gap: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let norm = op.norm_bound();
    if !(norm > 0.0) {
        return Err(Error::Infeasible(
            "constraint operator is zero and x = 0 violates the constraint".into(),
        ));
    }
    let step = 0.99 / (norm * norm);

    let mut rho = opts.rho;
    let mut x = zero.clone();
    let mut ax = zero.clone();
    let mut z = project_ball(&ax, b, lambda);
    let mut u = zero;
    let mut prev_dual: Option<DMatrix<f64>> = None;
    let mut infeasible_streak = 0;
    let mut gap = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        let r = &ax - &z + &u;
        let grad = op.apply(&r);
        soft_threshold_step(&mut x, &grad, step, step / rho);
        ax = op.apply(&x);
        let v = &ax + &u;
        let z_prev = std::mem::replace(&mut z, project_ball(&v, b, lambda));
        u = v - &z;

        if iter % opts.check_every != 0 && iter != opts.max_iter {
            continue;
        }

        let feas = max_abs(&(&ax - b));
        let violation = (feas - lambda).max(0.0);
        let y = &u * rho;
        let (dual, _) = dual_bound(op, &y, b, lambda);
        let primal = l1_norm(&x);
        gap = primal - dual;
        if violation <= opts.feas_tol && gap <= opts.abs_tol + opts.rel_tol * primal.max(dual.abs()) {
            return Ok(RawSolution {
                x,
                gap,
                iterations: iter,
                converged: true,
            });
        }

        // A diverging multiplier whose increment lies in ker Aᵀ and makes the
        // dual objective grow certifies an empty constraint set.
        if let Some(prev) = prev_dual.as_ref() {
            let dy = &y - prev;
            let dy_inf = max_abs(&dy);
            if dy_inf > 0.0 && violation > opts.feas_tol {
                let aty = max_abs(&op.apply(&dy));
                let ascent = dy.dot(b) + lambda * l1_norm(&dy);
                if aty <= 1e-6 * dy_inf * norm && ascent < -1e-6 * dy_inf * max_abs(b).max(1.0) {
                    infeasible_streak += 1;
                } else {
                    infeasible_streak = 0;
                }
                if infeasible_streak >= 5 && iter >= 100 {
                    return Err(Error::Infeasible(format!(
                        "dual ray detected after {iter} iterations (violation {violation:.3e})"
                    )));
                }
            }
        }
        prev_dual = Some(y);

        if opts.adaptive_rho {
            let primal_res = (&ax - &z).norm();
            let dual_res = rho * op.apply(&(&z - &z_prev)).norm();
            let new_rho = if primal_res > 10.0 * dual_res {
                rho * 2.0
            } else if dual_res > 10.0 * primal_res {
                rho / 2.0
            } else {
                rho
            };
            if new_rho != rho {
                u *= rho / new_rho;
                rho = new_rho;
            }
        }
    }

    Ok(RawSolution {
        x,
        gap,
        iterations: opts.max_iter,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tight() -> SolverOptions {
        SolverOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            feas_tol: 1e-10,
            max_iter: 200_000,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn equal_scatters_give_zero() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let problem = DifferentialProblem {
            scatter1: s.clone(),
            scatter2: s,
            lambda: 0.0,
        };
        let rep = solve_differential(&problem, &SolverOptions::default()).unwrap();
        assert_eq!(rep.objective, 0.0);
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let problem = DifferentialProblem {
            scatter1: DMatrix::from_element(1, 1, 2.0),
            scatter2: DMatrix::from_element(1, 1, 1.0),
            lambda: 0.5,
        };
        let rep = solve_differential(&problem, &tight()).unwrap();
        assert!(rep.converged);
        assert_abs_diff_eq!(rep.solution[(0, 0)], 0.25, epsilon = 1e-10);
    }

    #[test]
    fn zero_delta_gives_zero_direction() {
        let problem = DirectionProblem {
            scatter: DMatrix::identity(3, 3),
            delta: DVector::zeros(3),
            lambda: 0.0,
        };
        let rep = solve_direction(&problem, &SolverOptions::default()).unwrap();
        assert_eq!(rep.solution, DVector::zeros(3));
    }

    #[test]
    fn identity_scatter_soft_thresholds() {
        let problem = DirectionProblem {
            scatter: DMatrix::identity(3, 3),
            delta: DVector::from_vec(vec![0.9, -0.3, 0.05]),
            lambda: 0.2,
        };
        let rep = solve_direction(&problem, &tight()).unwrap();
        let expected = [0.7, -0.1, 0.0];
        for (got, want) in rep.solution.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn infeasible_singular_system_is_reported() {
        // Σ = diag(1, 0): the second coordinate of δ can never be matched.
        let problem = DirectionProblem {
            scatter: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            delta: DVector::from_vec(vec![1.0, 2.0]),
            lambda: 0.5,
        };
        let r = solve_direction(&problem, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))), "{r:?}");
    }

    #[test]
    fn rejects_negative_lambda() {
        let problem = DirectionProblem {
            scatter: DMatrix::identity(2, 2),
            delta: DVector::from_vec(vec![1.0, 1.0]),
            lambda: -1.0,
        };
        assert!(matches!(
            solve_direction(&problem, &SolverOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let problem = DirectionProblem {
            scatter: DMatrix::identity(2, 2),
            delta: DVector::from_vec(vec![1.0, 1.0, 1.0]),
            lambda: 0.1,
        };
        assert!(matches!(
            solve_direction(&problem, &SolverOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn schedule_arithmetic() {
        let got = lambda_schedule(2.0, 4.0, 100, 100);
        let want = 4.0 * (0.1 + (100f64.ln() / 100.0).sqrt());
        assert_abs_diff_eq!(got, want, epsilon = 1e-15);
        assert_abs_diff_eq!(lambda_schedule(4.0, 4.0, 100, 100), 2.0 * got, epsilon = 1e-15);
    }

    #[test]
    fn rate_scale_components() {
        let e2 = std::f64::consts::E.powi(2);
        let (n, p) = (e2.round() as usize, e2.round() as usize);
        let k = rate_scale(n, p);
        let want = (1.0 / p as f64).sqrt() + ((p as f64).ln() / n as f64).sqrt();
        assert_eq!(k, want);
    }
}
