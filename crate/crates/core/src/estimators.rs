//! Robust location and scatter: spatial sign, spatial median, spatial-sign
//! covariance, the U-statistic trace estimator, and the assembled scatter
//! `trace_est · sign_cov`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{coordinate_median, symmetrize};
use crate::sample::{check_vector, SampleMatrix};

/// Stopping rule for the Weiszfeld iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianOptions {
    /// Relative iterate change below which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MedianOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Robust location/scatter summary of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterEstimate {
    pub median: DVector<f64>,
    pub sign_cov: DMatrix<f64>,
    /// Trace estimate used to scale `sign_cov`, after flooring.
    pub trace_est: f64,
    pub scatter: DMatrix<f64>,
    /// Set when the raw trace estimate fell below `1e-8 · p` and was floored.
    pub trace_clamped: bool,
}

/// `x / ‖x‖₂`, or the zero vector when `x = 0`.
pub fn spatial_sign(x: &DVector<f64>) -> Result<DVector<f64>> {
    check_vector(x.as_slice(), x.len())?;
    Ok(sign_unchecked(x))
}

fn sign_unchecked(x: &DVector<f64>) -> DVector<f64> {
    let norm = x.norm();
    if norm > 0.0 {
        x / norm
    } else {
        DVector::zeros(x.len())
    }
}

/// Sum of Euclidean distances from `mu` to every row.
pub fn spatial_median_objective(samples: &SampleMatrix, mu: &DVector<f64>) -> f64 {
    samples.rows().map(|x| (x - mu).norm()).sum()
}

/// Minimizer of `Σᵢ ‖Xᵢ − μ‖₂` by the modified Weiszfeld iteration.
///
/// Starts at the coordinate-wise median. When an iterate lands on a data point
/// the point's pull is compared with the residual gradient of the others, and
/// the step is damped (or the iteration stops) accordingly.
pub fn spatial_median(samples: &SampleMatrix, opts: &MedianOptions) -> Result<DVector<f64>> {
    let data = samples.data();
    let (n, p) = (samples.n(), samples.p());
    if n == 1 {
        return Ok(samples.row(0));
    }
    let mut y = coordinate_median(data);
    let mut change = f64::INFINITY;

    for _ in 0..opts.max_iter {
        let mut weight_sum = 0.0;
        let mut weighted = DVector::zeros(p);
        let mut coincident = 0usize;
        for i in 0..n {
            let diff = data.row(i).transpose() - &y;
            let dist = diff.norm();
            if dist <= f64::EPSILON * (1.0 + y.norm()) {
                coincident += 1;
                continue;
            }
            let w = 1.0 / dist;
            weight_sum += w;
            weighted.axpy(w, &data.row(i).transpose(), 1.0);
        }
        if weight_sum == 0.0 {
            // every sample sits on y
            return Ok(y);
        }
        let target = weighted / weight_sum;
        let next = if coincident == 0 {
            target
        } else {
            // residual pull of the non-coincident points, R = (T - y) Σ wᵢ
            let pull = (&target - &y).norm() * weight_sum;
            if pull <= coincident as f64 {
                return Ok(y);
            }
            let gamma = coincident as f64 / pull;
            target * (1.0 - gamma) + &y * gamma
        };
        change = (&next - &y).norm();
        let scale = 1.0_f64.max(y.norm());
        y = next;
        if change <= opts.tol * scale {
            return Ok(y);
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        residual: change,
        last_iterate: y.as_slice().to_vec(),
    })
}

/// `(1/n) Σᵢ U(Xᵢ − c) U(Xᵢ − c)ᵀ`. Samples equal to `center` contribute zero.
pub fn sign_covariance(samples: &SampleMatrix, center: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_vector(center.as_slice(), samples.p())?;
    let n = samples.n();
    let mut signs = samples.data().clone();
    for mut row in signs.row_iter_mut() {
        row -= center.transpose();
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        } else {
            row.fill(0.0);
        }
    }
    let s = signs.transpose() * &signs / n as f64;
    Ok(symmetrize(&s))
}

/// Triple-sum U-statistic `Σ_{i≠j≠k} (Xᵢ−Xⱼ)ᵀ(X_k−Xⱼ) / (n(n−1)(n−2))`.
///
/// Over pairwise-distinct triples the sum collapses to
/// `(n−2)(n Σ‖Xᵢ‖² − ‖Σ Xᵢ‖²)`, so the estimate equals
/// `(n Σ‖Xᵢ‖² − ‖Σ Xᵢ‖²) / (n(n−1))`; it is evaluated in the centered form
/// `Σ‖Xᵢ − X̄‖² / (n−1)` to avoid cancellation.
pub fn trace_estimator(samples: &SampleMatrix) -> Result<f64> {
    samples.require_min_rows(3)?;
    let data = samples.data();
    let n = samples.n() as f64;
    let mean = data.row_mean();
    let mut ss = 0.0;
    for row in data.row_iter() {
        ss += (row - &mean).norm_squared();
    }
    Ok(ss / (n - 1.0))
}

/// Median, sign covariance at the median, trace estimate, and their product.
pub fn assemble_scatter(samples: &SampleMatrix, opts: &MedianOptions) -> Result<ScatterEstimate> {
    samples.require_min_rows(3)?;
    let median = spatial_median(samples, opts)?;
    let sign_cov = sign_covariance(samples, &median)?;
    let raw_trace = trace_estimator(samples)?;
    let floor = 1e-8 * samples.p() as f64;
    let (trace_est, trace_clamped) = if raw_trace < floor {
        log::warn!("trace estimate {raw_trace:.3e} floored to {floor:.3e}");
        (floor, true)
    } else {
        (raw_trace, false)
    };
    let scatter = &sign_cov * trace_est;
    Ok(ScatterEstimate {
        median,
        sign_cov,
        trace_est,
        scatter,
        trace_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_samples(n: usize, p: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    /// Direct evaluation of the triple sum over pairwise-distinct indices.
    fn naive_trace(samples: &SampleMatrix) -> f64 {
        let n = samples.n();
        let rows: Vec<_> = samples.rows().collect();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    total += (&rows[i] - &rows[j]).dot(&(&rows[k] - &rows[j]));
                }
            }
        }
        total / (n * (n - 1) * (n - 2)) as f64
    }

    /// Multi-start subgradient-free descent on the convex objective: coordinate
    /// pattern search with shrinking steps, independent of Weiszfeld.
    fn brute_force_median(samples: &SampleMatrix) -> DVector<f64> {
        let p = samples.p();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for start in samples.rows() {
            let mut x = start;
            let mut f = spatial_median_objective(samples, &x);
            let mut step = 1.0;
            while step > 1e-12 {
                let mut improved = false;
                for j in 0..p {
                    for dir in [-1.0, 1.0] {
                        let mut cand = x.clone();
                        cand[j] += dir * step;
                        let fc = spatial_median_objective(samples, &cand);
                        if fc < f {
                            x = cand;
                            f = fc;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn sign_of_three_four() {
        let s = spatial_sign(&DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(s[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn sign_of_zero_is_zero() {
        let s = spatial_sign(&DVector::zeros(3)).unwrap();
        assert_eq!(s, DVector::zeros(3));
    }

    #[test]
    fn sign_rejects_nan() {
        let r = spatial_sign(&DVector::from_vec(vec![1.0, f64::NAN]));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn median_of_single_sample() {
        let s = SampleMatrix::from_rows(&[vec![1.5, -2.0, 7.0]]).unwrap();
        let m = spatial_median(&s, &MedianOptions::default()).unwrap();
        assert_eq!(m.as_slice(), &[1.5, -2.0, 7.0]);
    }

    #[test]
    fn median_of_symmetric_cross() {
        let s = SampleMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let m = spatial_median(&s, &MedianOptions::default()).unwrap();
        assert!(m.norm() < 1e-12);
    }

    #[test]
    fn median_at_data_point_is_detected() {
        // The middle point of three collinear points is the median, and the
        // coordinate-wise start lands exactly on it.
        let s = SampleMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 0.0]]).unwrap();
        let m = spatial_median(&s, &MedianOptions::default()).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn median_matches_brute_force_oracle() {
        for seed in 0..5 {
            let s = random_samples(5, 3, 100 + seed);
            let opts = MedianOptions {
                tol: 1e-14,
                max_iter: 100_000,
            };
            let m = spatial_median(&s, &opts).unwrap();
            let oracle = brute_force_median(&s);
            assert!((&m - &oracle).norm() < 1e-6, "seed {seed}: {m} vs {oracle}");
        }
    }

    #[test]
    fn median_reports_non_convergence() {
        let s = random_samples(30, 4, 9);
        let r = spatial_median(
            &s,
            &MedianOptions {
                tol: 1e-300,
                max_iter: 3,
            },
        );
        match r {
            Err(Error::Convergence {
                iterations,
                last_iterate,
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(last_iterate.len(), 4);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn sign_covariance_rank_one() {
        let s = SampleMatrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        let c = sign_covariance(&s, &DVector::from_vec(vec![2.0, 1.0])).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn sign_covariance_trace_counts_non_coincident() {
        let s = SampleMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![-2.0, 1.0], vec![0.0, 0.0]])
            .unwrap();
        let c = sign_covariance(&s, &DVector::zeros(2)).unwrap();
        assert_abs_diff_eq!(c.trace(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sign_covariance_of_spherical_gaussian() {
        let s = random_samples(20_000, 10, 17);
        let c = sign_covariance(&s, &DVector::zeros(10)).unwrap() * 10.0;
        let dev = (c - DMatrix::identity(10, 10)).amax();
        assert!(dev < 0.05, "max deviation {dev}");
    }

    #[test]
    fn trace_of_identical_rows_is_zero() {
        let s = SampleMatrix::from_rows(&vec![vec![2.0, -1.0, 4.0]; 6]).unwrap();
        assert_eq!(trace_estimator(&s).unwrap(), 0.0);
    }

    #[test]
    fn trace_needs_three_rows() {
        let s = random_samples(2, 3, 1);
        assert!(matches!(
            trace_estimator(&s),
            Err(Error::InsufficientSamples { required: 3, found: 2 })
        ));
    }

    #[test]
    fn trace_matches_naive_small_integers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = SampleMatrix::new(DMatrix::from_fn(4, 2, |_, _| rng.random_range(-5..=5) as f64)).unwrap();
        let fast = trace_estimator(&s).unwrap();
        let naive = naive_trace(&s);
        assert!((fast - naive).abs() <= 1e-10 * naive.abs().max(1e-300), "{fast} vs {naive}");
    }

    #[test]
    fn assembled_trace_equals_estimate() {
        let s = random_samples(50, 6, 3);
        let est = assemble_scatter(&s, &MedianOptions::default()).unwrap();
        assert!((est.scatter.trace() - est.trace_est).abs() < 1e-12 * est.trace_est);
        assert!(!est.trace_clamped);
    }

    #[test]
    fn large_sample_scatter_trace_close_to_dimension() {
        let s = random_samples(4000, 10, 5);
        let est = assemble_scatter(&s, &MedianOptions::default()).unwrap();
        assert!((est.scatter.trace() - 10.0).abs() < 1.0);
    }

    #[test]
    fn constant_rows_clamp_the_trace() {
        let s = SampleMatrix::from_rows(&vec![vec![1.0, 1.0]; 4]).unwrap();
        let est = assemble_scatter(&s, &MedianOptions::default()).unwrap();
        assert!(est.trace_clamped);
        assert_eq!(est.trace_est, 2e-8);
    }

    #[test]
    fn sign_covariance_is_psd() {
        let s = random_samples(8, 12, 21);
        let c = sign_covariance(&s, &DVector::zeros(12)).unwrap();
        assert!(min_eigenvalue(&c) >= -1e-10);
        assert_eq!(c, c.transpose());
    }
}
