#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `Σ = GᵀG/m + ridge·I` for `m = p + 2` standard normal rows.
pub fn random_spd(p: usize, ridge: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = p + 2;
    let g = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.transpose() * g / m as f64 + DMatrix::identity(p, p) * ridge
}

pub fn random_vector(p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample(StandardNormal))
}

/// Minimizes `Σ|xₖ|` subject to `|Σₖ a_{rk} xₖ − b_r| ≤ λ` with `x = u − v`,
/// `u, v ≥ 0`. Returns the optimal value and `x`.
fn l1_dantzig_lp(rows: &[Vec<f64>], b: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let k = rows[0].len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let pos: Vec<Variable> = (0..k).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let neg: Vec<Variable> = (0..k).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for (row, &rhs) in rows.iter().zip(b) {
        let terms = || {
            row.iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .flat_map(|(j, &a)| [(pos[j], a), (neg[j], -a)])
        };
        lp.add_constraint(terms().collect::<Vec<_>>(), ComparisonOp::Le, rhs + lambda);
        lp.add_constraint(terms().map(|(v, a)| (v, -a)).collect::<Vec<_>>(), ComparisonOp::Le, lambda - rhs);
    }
    let sol = lp.solve().expect("oracle LP is feasible and bounded");
    let x = (0..k).map(|j| sol[pos[j]] - sol[neg[j]]).collect();
    (sol.objective(), x)
}

/// LP optimum of the differential problem over unrestricted `p × p` matrices:
/// `2p²` variables and `2p²` inequality rows.
pub fn differential_lp(s1: &DMatrix<f64>, s2: &DMatrix<f64>, lambda: f64) -> (f64, DMatrix<f64>) {
    let p = s1.nrows();
    let mut rows = Vec::with_capacity(p * p);
    let mut rhs = Vec::with_capacity(p * p);
    for j in 0..p {
        for i in 0..p {
            // Coefficient of D[a, b] in (½ S1 D S2 + ½ S2 D S1)[i, j].
            let mut row = vec![0.0; p * p];
            for b in 0..p {
                for a in 0..p {
                    row[a + b * p] = 0.5 * (s1[(i, a)] * s2[(b, j)] + s2[(i, a)] * s1[(b, j)]);
                }
            }
            rows.push(row);
            rhs.push(s1[(i, j)] - s2[(i, j)]);
        }
    }
    let (obj, x) = l1_dantzig_lp(&rows, &rhs, lambda);
    (obj, DMatrix::from_column_slice(p, p, &x))
}

/// LP optimum of the direction problem `min ‖β‖₁` s.t. `‖Sβ − δ‖_∞ ≤ λ`.
pub fn direction_lp(s: &DMatrix<f64>, delta: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>) {
    let rows: Vec<Vec<f64>> = s.row_iter().map(|r| r.iter().copied().collect()).collect();
    let (obj, x) = l1_dantzig_lp(&rows, delta.as_slice(), lambda);
    (obj, DVector::from_vec(x))
}

/// Direct evaluation of the triple sum over pairwise-distinct indices.
pub fn naive_trace(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i != j && j != k && i != k {
                    total += (x.row(i) - x.row(j)).dot(&(x.row(k) - x.row(j)));
                }
            }
        }
    }
    total / (n * (n - 1) * (n - 2)) as f64
}

fn distance_sum(x: &DMatrix<f64>, m: &DVector<f64>) -> f64 {
    x.row_iter().map(|r| (r.transpose() - m).norm()).sum()
}

/// Geometric median by cyclic coordinate pattern search with halving steps,
/// restarted from the mean and from every sample point.
pub fn pattern_search_median(x: &DMatrix<f64>) -> DVector<f64> {
    let p = x.ncols();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let starts = std::iter::once(x.row_mean().transpose()).chain(x.row_iter().map(|r| r.transpose()));
    for mut m in starts {
        let mut f = distance_sum(x, &m);
        let mut step = 1.0;
        while step > 1e-13 {
            let mut moved = false;
            for j in 0..p {
                for dir in [-1.0, 1.0] {
                    let mut cand = m.clone();
                    cand[j] += dir * step;
                    let fc = distance_sum(x, &cand);
                    if fc < f {
                        (m, f, moved) = (cand, fc, true);
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, m));
        }
    }
    best.unwrap().1
}
