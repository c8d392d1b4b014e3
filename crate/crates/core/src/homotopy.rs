//! Exact solution path of `min Σ wᵢ|xᵢ| s.t. ‖A x − b‖_∞ ≤ λ` as λ decreases
//! from `‖b‖_∞`.
//!
//! The path is piecewise linear. Between breakpoints the solution is pinned by
//! a square active set: columns `Γ` (the support of x) and rows `Λ` (the
//! constraints at their bound), with `A[Λ,Γ] x_Γ = b_Λ + λ s_Λ`. The dual
//! vector y, supported on `Λ`, solves `A[Λ,Γ]ᵀ y_Λ = w_Γ ∘ sign(x_Γ)` and stays
//! constant between breakpoints. A breakpoint is either a row reaching its
//! bound or a support entry reaching zero; each is resolved by one dual ratio
//! test that restores a square active set.

use nalgebra::{DMatrix, DVector};

pub(crate) trait PathOperator {
    /// Number of variables, equal to the number of constraint rows.
    fn dim(&self) -> usize;
    fn weight(&self, col: usize) -> f64;
    fn rhs(&self) -> &DVector<f64>;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_t(&self, y: &DVector<f64>) -> DVector<f64>;
    fn entry(&self, row: usize, col: usize) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PathLimits {
    pub max_pivots: usize,
    pub max_active: usize,
    pub refresh_every: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum PathPoint {
    Solved { x: DVector<f64>, y: DVector<f64>, pivots: usize },
    /// The constraint set is empty at this λ.
    Infeasible,
    /// The path stopped before reaching this λ.
    Truncated(String),
}

/// Primal objective, certified dual bound, and constraint violation `‖Ax − b‖_∞ − λ`.
pub(crate) fn certificate<O: PathOperator>(op: &O, x: &DVector<f64>, y: &DVector<f64>, lambda: f64) -> (f64, f64, f64) {
    let n = op.dim();
    let primal: f64 = (0..n).map(|i| op.weight(i) * x[i].abs()).sum();
    let violation = (op.apply(x) - op.rhs()).amax() - lambda;
    let aty = op.apply_t(y);
    let scale = (0..n).map(|i| aty[i].abs() / op.weight(i)).fold(1.0, f64::max);
    let dual = (y.dot(op.rhs()) - lambda * y.lp_norm(1)) / scale;
    (primal, dual, violation)
}

const TINY: f64 = 1e-12;

#[derive(Debug)]
enum Event {
    RowHits(usize),
    ColumnZero(usize),
}

#[derive(Debug)]
enum DualExit {
    AddColumn(usize),
    DropRow(usize),
}

struct State<'a, O: PathOperator> {
    op: &'a O,
    lambda: f64,
    x: DVector<f64>,
    /// `A x − b`.
    r: DVector<f64>,
    y: DVector<f64>,
    /// `Aᵀ y`.
    v: DVector<f64>,
    cols: Vec<usize>,
    signs_x: Vec<f64>,
    in_cols: Vec<bool>,
    rows: Vec<usize>,
    signs_r: Vec<f64>,
    in_rows: Vec<bool>,
    /// Inverse of `A[rows, cols]`, indexed cols × rows.
    inv: DMatrix<f64>,
    pivots: usize,
    /// Row that left the active set in the latest pivot; it sits exactly on
    /// its bound and moves inward.
    just_dropped: Option<usize>,
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl<'a, O: PathOperator> State<'a, O> {
    fn new(op: &'a O) -> Self {
        let n = op.dim();
        Self {
            op,
            lambda: op.rhs().amax(),
            x: DVector::zeros(n),
            r: -op.rhs(),
            y: DVector::zeros(n),
            v: DVector::zeros(n),
            cols: Vec::new(),
            signs_x: Vec::new(),
            in_cols: vec![false; n],
            rows: Vec::new(),
            signs_r: Vec::new(),
            in_rows: vec![false; n],
            inv: DMatrix::zeros(0, 0),
            pivots: 0,
            just_dropped: None,
        }
    }

    fn k(&self) -> usize {
        self.cols.len()
    }

    fn support_solution(&self, lambda: f64) -> DVector<f64> {
        let rhs = DVector::from_iterator(
            self.k(),
            self.rows.iter().zip(&self.signs_r).map(|(&j, &s)| self.op.rhs()[j] + lambda * s),
        );
        let xs = &self.inv * rhs;
        let mut x = DVector::zeros(self.op.dim());
        for (q, &c) in self.cols.iter().enumerate() {
            x[c] = xs[q];
        }
        x
    }

    /// Rebuilds the inverse and every derived vector from the active set.
    fn refresh(&mut self) -> Result<(), String> {
        let k = self.k();
        let m = DMatrix::from_fn(k, k, |a, c| self.op.entry(self.rows[a], self.cols[c]));
        self.inv = m.try_inverse().ok_or_else(|| "active-set matrix became singular".to_string())?;
        self.x = self.support_solution(self.lambda);
        let wz = DVector::from_iterator(k, self.cols.iter().zip(&self.signs_x).map(|(&c, &z)| self.op.weight(c) * z));
        let ys = self.inv.transpose() * wz;
        self.y = DVector::zeros(self.op.dim());
        for (q, &j) in self.rows.iter().enumerate() {
            self.y[j] = ys[q];
        }
        self.r = self.op.apply(&self.x) - self.op.rhs();
        self.v = self.op.apply_t(&self.y);
        Ok(())
    }

    /// Recomputes the residual vectors exactly and refactors the active-set
    /// matrix only if the incremental updates have drifted.
    fn resync(&mut self) -> Result<(), String> {
        self.r = self.op.apply(&self.x) - self.op.rhs();
        self.v = self.op.apply_t(&self.y);
        let mut drift: f64 = 0.0;
        for (&j, &s) in self.rows.iter().zip(&self.signs_r) {
            drift = drift.max((self.r[j] - self.lambda * s).abs() / self.lambda.max(1.0));
        }
        for (&c, &z) in self.cols.iter().zip(&self.signs_x) {
            let w = self.op.weight(c);
            drift = drift.max((self.v[c] - w * z).abs() / w);
        }
        if drift > 1e-10 {
            self.refresh()?;
        }
        Ok(())
    }

    /// Moves y along `dy` until a new column becomes tight or an active row's
    /// multiplier reaches zero. `skip_row` is the row whose multiplier starts
    /// at zero and moves away from it.
    fn dual_ratio(&self, dy: &DVector<f64>, c: &DVector<f64>, skip_row: Option<usize>) -> Option<(f64, DualExit)> {
        let mut best: Option<(f64, DualExit)> = None;
        let mut consider = |theta: f64, exit: DualExit| {
            let theta = theta.max(0.0);
            if best.as_ref().is_none_or(|(b, _)| theta < *b) {
                best = Some((theta, exit));
            }
        };
        let scale = c.amax().max(TINY);
        for l in 0..self.op.dim() {
            if self.in_cols[l] {
                continue;
            }
            let w = self.op.weight(l);
            let cl = c[l];
            if cl > TINY * scale {
                consider((w - self.v[l]) / cl, DualExit::AddColumn(l));
            } else if cl < -TINY * scale {
                consider((-w - self.v[l]) / cl, DualExit::AddColumn(l));
            }
        }
        for (q, &j) in self.rows.iter().enumerate() {
            if Some(j) == skip_row {
                continue;
            }
            let (yj, dj) = (self.y[j], dy[j]);
            if yj * dj < 0.0 {
                consider(-yj / dj, DualExit::DropRow(q));
            }
        }
        best
    }

    fn row_of_active(&self, row: usize) -> DVector<f64> {
        DVector::from_iterator(self.k(), self.cols.iter().map(|&c| self.op.entry(row, c)))
    }

    fn col_of_active(&self, col: usize) -> DVector<f64> {
        DVector::from_iterator(self.k(), self.rows.iter().map(|&j| self.op.entry(j, col)))
    }

    /// Resolves a breakpoint. Returns `Ok(false)` when the dual ray is
    /// unbounded, which certifies infeasibility for every smaller λ.
    fn pivot(&mut self, event: Event, limits: &PathLimits) -> Result<bool, String> {
        let n = self.op.dim();
        self.just_dropped = None;
        let mut dy = DVector::zeros(n);
        let (skip_row, leaving_col) = match event {
            Event::RowHits(j) => {
                let sj = sign(self.r[j]);
                let a_j = self.row_of_active(j);
                let dys = self.inv.transpose() * a_j * sj;
                for (q, &row) in self.rows.iter().enumerate() {
                    dy[row] = dys[q];
                }
                dy[j] = -sj;
                (Some(j), None)
            }
            Event::ColumnZero(i) => {
                let pos = self.cols.iter().position(|&c| c == i).expect("column in support");
                let z = self.signs_x[pos];
                for (q, &row) in self.rows.iter().enumerate() {
                    dy[row] = -z * self.inv[(pos, q)];
                }
                self.in_cols[i] = false;
                self.x[i] = 0.0;
                (None, Some(pos))
            }
        };
        let c = self.op.apply_t(&dy);
        let Some((theta, exit)) = self.dual_ratio(&dy, &c, skip_row) else {
            return Ok(false);
        };
        self.y.axpy(theta, &dy, 1.0);
        self.v.axpy(theta, &c, 1.0);

        match (skip_row, leaving_col, exit) {
            (Some(j), None, DualExit::AddColumn(l)) => {
                if self.k() >= limits.max_active {
                    return Err(format!("active set exceeded {} columns", limits.max_active));
                }
                let u = self.col_of_active(l);
                let a_j = self.row_of_active(j);
                let d = self.op.entry(j, l);
                self.border(&u, &a_j, d)?;
                self.rows.push(j);
                self.signs_r.push(sign(self.r[j]));
                self.in_rows[j] = true;
                self.add_col_flags(l);
            }
            (Some(j), None, DualExit::DropRow(q)) => {
                let a_j = self.row_of_active(j);
                let current = self.row_of_active(self.rows[q]);
                self.replace_row(q, &(a_j - current))?;
                self.drop_row_flags(q);
                self.rows[q] = j;
                self.signs_r[q] = sign(self.r[j]);
                self.in_rows[j] = true;
            }
            (None, Some(pos), DualExit::AddColumn(l)) => {
                let u = self.col_of_active(l);
                let current = self.col_of_active(self.cols[pos]);
                self.replace_col(pos, &(u - current))?;
                self.cols[pos] = l;
                self.signs_x[pos] = sign(self.v[l]);
                self.in_cols[l] = true;
                self.v[l] = self.op.weight(l) * self.signs_x[pos];
            }
            (None, Some(pos), DualExit::DropRow(q)) => {
                self.shrink(pos, q)?;
                self.drop_row_flags(q);
                self.rows.remove(q);
                self.signs_r.remove(q);
                self.cols.remove(pos);
                self.signs_x.remove(pos);
            }
            _ => unreachable!("events carry exactly one of row or column"),
        }
        self.pivots += 1;
        if self.pivots.is_multiple_of(limits.refresh_every) {
            self.resync()?;
        }
        Ok(true)
    }

    fn add_col_flags(&mut self, l: usize) {
        self.cols.push(l);
        self.signs_x.push(sign(self.v[l]));
        self.in_cols[l] = true;
        self.v[l] = self.op.weight(l) * sign(self.v[l]);
    }

    fn drop_row_flags(&mut self, q: usize) {
        let j = self.rows[q];
        self.y[j] = 0.0;
        self.in_rows[j] = false;
        self.just_dropped = Some(j);
    }

    /// Inverse of `[M u; a_jᵀ d]` from the inverse of `M`.
    fn border(&mut self, u: &DVector<f64>, a_j: &DVector<f64>, d: f64) -> Result<(), String> {
        let k = self.k();
        let nu = &self.inv * u;
        let an = self.inv.tr_mul(a_j);
        let schur = d - a_j.dot(&nu);
        if schur.abs() <= TINY * (d.abs() + a_j.norm() * nu.norm()).max(1.0) {
            return Err("singular pivot while enlarging the active set".into());
        }
        let mut next = DMatrix::zeros(k + 1, k + 1);
        let mut top = next.view_mut((0, 0), (k, k));
        top.copy_from(&self.inv);
        top.ger(1.0 / schur, &nu, &an, 1.0);
        for a in 0..k {
            next[(a, k)] = -nu[a] / schur;
            next[(k, a)] = -an[a] / schur;
        }
        next[(k, k)] = 1.0 / schur;
        self.inv = next;
        Ok(())
    }

    /// Row `q` of `M` changes by `delta`.
    fn replace_row(&mut self, q: usize, delta: &DVector<f64>) -> Result<(), String> {
        let col_q = self.inv.column(q).into_owned();
        let dn = self.inv.tr_mul(delta);
        let denom = 1.0 + dn[q];
        if denom.abs() <= TINY {
            return Err("singular pivot while exchanging a row".into());
        }
        self.inv.ger(-1.0 / denom, &col_q, &dn, 1.0);
        Ok(())
    }

    /// Column `pos` of `M` changes by `delta`.
    fn replace_col(&mut self, pos: usize, delta: &DVector<f64>) -> Result<(), String> {
        let nd = &self.inv * delta;
        let row_pos = self.inv.row(pos).transpose();
        let denom = 1.0 + nd[pos];
        if denom.abs() <= TINY {
            return Err("singular pivot while exchanging a column".into());
        }
        self.inv.ger(-1.0 / denom, &nd, &row_pos, 1.0);
        Ok(())
    }

    /// Deletes row `q` and column `pos` of `M`.
    fn shrink(&mut self, pos: usize, q: usize) -> Result<(), String> {
        let pivot = self.inv[(pos, q)];
        if pivot.abs() <= TINY {
            return Err("singular pivot while shrinking the active set".into());
        }
        let col = self.inv.column(q).into_owned().remove_row(pos);
        let row = self.inv.row(pos).transpose().remove_row(q);
        let inv = std::mem::replace(&mut self.inv, DMatrix::zeros(0, 0));
        self.inv = inv.remove_row(pos).remove_column(q);
        self.inv.ger(-1.0 / pivot, &col, &row, 1.0);
        Ok(())
    }
}

/// Solutions at every requested λ, in the order given.
pub(crate) fn solve_path<O: PathOperator>(op: &O, lambdas: &[f64], limits: &PathLimits) -> Vec<PathPoint> {
    let n = op.dim();
    let mut out: Vec<Option<PathPoint>> = vec![None; lambdas.len()];
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut st = State::new(op);
    let mut next = 0;
    while next < order.len() && lambdas[order[next]] >= st.lambda {
        out[order[next]] = Some(PathPoint::Solved {
            x: DVector::zeros(n),
            y: DVector::zeros(n),
            pivots: 0,
        });
        next += 1;
    }
    let mut event = Event::RowHits(st.r.iamax());
    let mut failure: Option<PathPoint> = None;

    'path: while next < order.len() {
        if st.pivots >= limits.max_pivots {
            failure = Some(PathPoint::Truncated(format!("pivot limit {} reached", limits.max_pivots)));
            break;
        }
        match st.pivot(event, limits) {
            Ok(true) => {}
            Ok(false) => {
                failure = Some(PathPoint::Infeasible);
                break;
            }
            Err(msg) => {
                failure = Some(PathPoint::Truncated(msg));
                break;
            }
        }

        let k = st.k();
        let dxs = &st.inv * DVector::from_column_slice(&st.signs_r);
        let mut dx = DVector::zeros(n);
        for (q, &c) in st.cols.iter().enumerate() {
            dx[c] = dxs[q];
        }
        let dr = op.apply(&dx);

        let mut step = f64::INFINITY;
        let mut hit: Option<Event> = None;
        for q in 0..k {
            let c = st.cols[q];
            let (xi, di) = (st.x[c], dx[c]);
            if xi != 0.0 && xi * di > 0.0 && xi / di < step {
                step = xi / di;
                hit = Some(Event::ColumnZero(c));
            }
        }
        let scale = dr.amax().max(1.0);
        for j in 0..n {
            if st.in_rows[j] {
                continue;
            }
            let (rj, dj) = (st.r[j], dr[j]);
            // A row that just left sits on one bound: it re-enters at once if
            // it heads outward there, and can still reach the opposite bound.
            let resting = (st.just_dropped == Some(j)).then(|| sign(rj));
            if resting.is_some_and(|s| 1.0 - s * dj > TINY * scale) {
                step = 0.0;
                hit = Some(Event::RowHits(j));
                continue;
            }
            if resting != Some(1.0) && 1.0 - dj > TINY * scale {
                let t = ((st.lambda - rj) / (1.0 - dj)).max(0.0);
                if t < step {
                    step = t;
                    hit = Some(Event::RowHits(j));
                }
            }
            if resting != Some(-1.0) && 1.0 + dj > TINY * scale {
                let t = ((st.lambda + rj) / (1.0 + dj)).max(0.0);
                if t < step {
                    step = t;
                    hit = Some(Event::RowHits(j));
                }
            }
        }

        while next < order.len() && st.lambda - lambdas[order[next]] <= step {
            let target = lambdas[order[next]].max(0.0);
            out[order[next]] = Some(PathPoint::Solved {
                x: st.support_solution(target),
                y: st.y.clone(),
                pivots: st.pivots,
            });
            next += 1;
        }
        if next == order.len() {
            break 'path;
        }
        let Some(ev) = hit else {
            failure = Some(PathPoint::Truncated("path ended before the smallest λ".into()));
            break;
        };
        st.lambda -= step;
        st.x.axpy(-step, &dx, 1.0);
        st.r.axpy(-step, &dr, 1.0);
        match ev {
            Event::ColumnZero(c) => st.x[c] = 0.0,
            Event::RowHits(j) => st.r[j] = sign(st.r[j]) * st.lambda,
        }
        event = ev;
    }
    let fill = failure.unwrap_or_else(|| PathPoint::Truncated("path stopped early".into()));
    out.into_iter().map(|p| p.unwrap_or_else(|| fill.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Dense {
        a: DMatrix<f64>,
        b: DVector<f64>,
        w: Vec<f64>,
    }

    impl PathOperator for Dense {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn weight(&self, col: usize) -> f64 {
            self.w[col]
        }
        fn rhs(&self) -> &DVector<f64> {
            &self.b
        }
        fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.a * x
        }
        fn apply_t(&self, y: &DVector<f64>) -> DVector<f64> {
            self.a.tr_mul(y)
        }
        fn entry(&self, row: usize, col: usize) -> f64 {
            self.a[(row, col)]
        }
    }

    const LIMITS: PathLimits = PathLimits {
        max_pivots: 10_000,
        max_active: 1000,
        refresh_every: 25,
    };

    fn solved(p: &PathPoint) -> (&DVector<f64>, &DVector<f64>) {
        match p {
            PathPoint::Solved { x, y, .. } => (x, y),
            other => panic!("not solved: {other:?}"),
        }
    }

    #[test]
    fn identity_path_is_soft_thresholding() {
        let op = Dense {
            a: DMatrix::identity(3, 3),
            b: DVector::from_vec(vec![0.9, -0.3, 0.05]),
            w: vec![1.0; 3],
        };
        let pts = solve_path(&op, &[0.2, 1.0, 0.0, 0.5], &LIMITS);
        let expect = [[0.7, -0.1, 0.0], [0.0; 3], [0.9, -0.3, 0.05], [0.4, 0.0, 0.0]];
        for (p, e) in pts.iter().zip(expect) {
            let (x, _) = solved(p);
            for i in 0..3 {
                assert!((x[i] - e[i]).abs() < 1e-12, "{x} vs {e:?}");
            }
        }
    }

    #[test]
    fn certificate_closes_on_random_instance() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -0.5, 1.0, 3.0, 0.2, -0.5, 0.2, 2.0]);
        let op = Dense {
            a,
            b: DVector::from_vec(vec![1.0, -2.0, 0.7]),
            w: vec![1.0, 2.0, 1.0],
        };
        for lambda in [0.0, 0.1, 0.4, 1.3] {
            let pts = solve_path(&op, &[lambda], &LIMITS);
            let (x, y) = solved(&pts[0]);
            let (primal, dual, viol) = certificate(&op, x, y, lambda);
            assert!(viol <= 1e-12, "violation {viol}");
            assert!((primal - dual).abs() <= 1e-12, "gap {} at {lambda}", primal - dual);
        }
    }

    #[test]
    fn singular_operator_is_infeasible_below_threshold() {
        let op = Dense {
            a: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            b: DVector::from_vec(vec![1.0, 2.0]),
            w: vec![1.0; 2],
        };
        let pts = solve_path(&op, &[3.0, 0.5], &LIMITS);
        assert!(matches!(pts[0], PathPoint::Solved { .. }));
        assert!(matches!(pts[1], PathPoint::Infeasible));
    }

    /// Gram matrix of few, correlated rows: ill-conditioned like a sample
    /// covariance with n close to p.
    fn gram_instance(p: usize, seed: u64) -> Dense {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = p + 3;
        let z = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let mix = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else if j == i + 1 { 0.6 } else { 0.0 });
        let x = z * mix;
        let a = x.tr_mul(&x) / n as f64 + DMatrix::identity(p, p) * 1e-3;
        let b = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        Dense { a, b, w: vec![1.0; p] }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn every_path_point_is_feasible_and_certified(seed in any::<u64>(), p in 5usize..30) {
            let op = gram_instance(p, seed);
            let top = op.b.amax();
            let lambdas: Vec<f64> = (0..10).map(|k| top * 0.5f64.powi(k)).collect();
            for (p, &lambda) in solve_path(&op, &lambdas, &LIMITS).iter().zip(&lambdas) {
                let (x, y) = solved(p);
                let (primal, dual, viol) = certificate(&op, x, y, lambda);
                prop_assert!(viol <= 1e-9, "violation {} at {}", viol, lambda);
                prop_assert!(primal - dual <= 1e-8 * (1.0 + primal), "gap {} at {}", primal - dual, lambda);
            }
        }
    }
}
