//! Synthetic populations: precision models, sparse differential structure,
//! and the three elliptical samplers used in the benchmark.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_spd, cholesky_lower, min_eigenvalue, spd_inverse, symmetrize};
use crate::sample::SampleMatrix;

/// Minimum eigenvalue accepted for generated precision and covariance matrices.
pub const PD_FLOOR: f64 = 1e-10;

/// SplitMix64 finalizer; mixes a base seed with stream indices.
pub fn derive_seed(base: u64, streams: &[u64]) -> u64 {
    let mut state = base;
    for &s in streams {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(s.wrapping_mul(0xD1B5_4A32_D192_ED03));
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PrecisionKind {
    /// `ωᵢⱼ = ρ^|i−j|`.
    Ar1 { rho: f64 },
    /// Bandwidth-4 pattern with diagonals 2, 0.8, 0.4, 0.4, 0.2.
    Banded,
    /// Symmetrized sparse random graph with weights in ±[0.5, 1], shifted to be PSD.
    ErdosRenyi { edge_prob: f64, jitter: f64 },
}

impl PrecisionKind {
    pub fn ar1() -> Self {
        PrecisionKind::Ar1 { rho: 0.5 }
    }

    pub fn erdos_renyi() -> Self {
        PrecisionKind::ErdosRenyi {
            edge_prob: 0.05,
            jitter: 1e-3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrecisionKind::Ar1 { .. } => "ar1",
            PrecisionKind::Banded => "banded",
            PrecisionKind::ErdosRenyi { .. } => "erdos_renyi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionModel {
    pub kind: PrecisionKind,
    pub p: usize,
    pub seed: u64,
}

const BANDS: [f64; 5] = [2.0, 0.8, 0.4, 0.4, 0.2];

pub fn make_precision(model: &PrecisionModel) -> Result<DMatrix<f64>> {
    let p = model.p;
    if p == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let omega = match model.kind {
        PrecisionKind::Ar1 { rho } => {
            if !(rho.abs() < 1.0) {
                return Err(Error::invalid(format!("AR(1) requires |rho| < 1, got {rho}")));
            }
            DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
        }
        PrecisionKind::Banded => {
            if p < BANDS.len() {
                return Err(Error::invalid(format!("banded model needs p >= 5, got {p}")));
            }
            DMatrix::from_fn(p, p, |i, j| BANDS.get(i.abs_diff(j)).copied().unwrap_or(0.0))
        }
        PrecisionKind::ErdosRenyi { edge_prob, jitter } => {
            if !(0.0..=1.0).contains(&edge_prob) {
                return Err(Error::invalid("edge probability must lie in [0, 1]"));
            }
            let mut rng = rng_from(model.seed);
            let raw = DMatrix::from_fn(p, p, |_, _| {
                if rng.random_bool(edge_prob) {
                    let magnitude = rng.random_range(0.5..=1.0);
                    if rng.random_bool(0.5) {
                        magnitude
                    } else {
                        -magnitude
                    }
                } else {
                    0.0
                }
            });
            let sym = symmetrize(&raw);
            let shift = (-min_eigenvalue(&sym)).max(0.0);
            let mut omega = sym + DMatrix::identity(p, p) * shift;
            if min_eigenvalue(&omega) <= PD_FLOOR {
                omega += DMatrix::identity(p, p) * jitter;
            }
            omega
        }
    };
    check_spd(&omega, PD_FLOOR, "precision matrix")?;
    Ok(omega)
}

/// Two-class population with sparse precision difference and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationPair {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub sigma1: DMatrix<f64>,
    pub sigma2: DMatrix<f64>,
    pub omega1: DMatrix<f64>,
    pub omega2: DMatrix<f64>,
    /// `Ω₂ − Ω₁`.
    pub d_true: DMatrix<f64>,
    /// `Ω₂(μ₂ − μ₁)`.
    pub beta_true: DVector<f64>,
    pub s1: usize,
    pub s2: usize,
}

impl PopulationPair {
    pub fn p(&self) -> usize {
        self.mu1.len()
    }

    pub fn mean(&self, class_id: usize) -> Result<&DVector<f64>> {
        match class_id {
            1 => Ok(&self.mu1),
            2 => Ok(&self.mu2),
            _ => Err(Error::invalid(format!("class id must be 1 or 2, got {class_id}"))),
        }
    }

    pub fn covariance(&self, class_id: usize) -> Result<&DMatrix<f64>> {
        match class_id {
            1 => Ok(&self.sigma1),
            2 => Ok(&self.sigma2),
            _ => Err(Error::invalid(format!("class id must be 1 or 2, got {class_id}"))),
        }
    }
}

/// Knobs for the sparse differential matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    /// Nonzero entries of `Vec(D)`; an off-diagonal pair counts twice.
    pub s1: usize,
    /// Leading ones in `β`.
    pub s2: usize,
    /// Magnitude range of the nonzeros of `D`; signs are random.
    pub d_range: (f64, f64),
    /// Redraws of `D` allowed before giving up on `Ω₁ + D ≻ 0`.
    pub max_attempts: usize,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            s1: 10,
            s2: 10,
            d_range: (0.3, 0.7),
            max_attempts: 1000,
        }
    }
}

fn draw_sparse_symmetric(p: usize, s1: usize, range: (f64, f64), rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(p, p);
    let draw = |rng: &mut ChaCha8Rng| {
        let m = rng.random_range(range.0..=range.1);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    };
    if s1 % 2 == 1 {
        let i = rng.random_range(0..p);
        d[(i, i)] = draw(rng);
    }
    let mut pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    pairs.shuffle(rng);
    for &(i, j) in pairs.iter().take(s1 / 2) {
        let v = draw(rng);
        d[(i, j)] = v;
        d[(j, i)] = v;
    }
    d
}

pub fn make_population(omega1: &DMatrix<f64>, spec: &PopulationSpec, seed: u64) -> Result<PopulationPair> {
    let p = omega1.nrows();
    check_spd(omega1, PD_FLOOR, "omega1")?;
    let (lo, hi) = spec.d_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::invalid(format!("invalid magnitude range [{lo}, {hi}]")));
    }
    if spec.s1 / 2 > p * (p - 1) / 2 {
        return Err(Error::invalid(format!("s1 = {} exceeds the symmetric support of a {p}x{p} matrix", spec.s1)));
    }
    if spec.s2 > p {
        return Err(Error::invalid(format!("s2 = {} exceeds p = {p}", spec.s2)));
    }
    let mut rng = rng_from(seed);
    let mut attempt = 0;
    let (d, omega2) = loop {
        if attempt == spec.max_attempts {
            return Err(Error::Generation(format!(
                "no positive definite Omega2 after {} draws of D",
                spec.max_attempts
            )));
        }
        attempt += 1;
        let d = draw_sparse_symmetric(p, spec.s1, spec.d_range, &mut rng);
        let omega2 = omega1 + &d;
        if min_eigenvalue(&omega2) > PD_FLOOR {
            break (d, omega2);
        }
    };
    let sigma1 = spd_inverse(omega1, "omega1")?;
    let sigma2 = spd_inverse(&omega2, "omega2")?;
    let beta = DVector::from_fn(p, |i, _| if i < spec.s2 { 1.0 } else { 0.0 });
    let mu1 = DVector::zeros(p);
    let mu2 = &sigma2 * &beta;
    Ok(PopulationPair {
        mu1,
        mu2,
        sigma1,
        sigma2,
        omega1: omega1.clone(),
        omega2,
        d_true: d,
        beta_true: beta,
        s1: spec.s1,
        s2: spec.s2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    /// Multivariate t with 5 degrees of freedom, scaled to covariance Σ.
    T5,
    /// `0.2·N(μ, 9Σ) + 0.8·N(μ, Σ)`.
    MixtureNormal,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::T5 => "t5",
            Family::MixtureNormal => "mixture_normal",
        }
    }
}

const T_DOF: f64 = 5.0;

/// `n` draws from `family` with location `mu` and scatter `sigma`.
pub fn sample_elliptical(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n: usize,
    family: Family,
    seed: u64,
) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let p = mu.len();
    let l = cholesky_lower(sigma, "covariance")?;
    let mut rng = rng_from(seed);
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = z * l.transpose();
    let chi = ChiSquared::new(T_DOF).expect("valid degrees of freedom");
    for mut row in x.row_iter_mut() {
        let radial = match family {
            Family::Normal => 1.0,
            Family::T5 => ((T_DOF - 2.0) / chi.sample(&mut rng)).sqrt(),
            Family::MixtureNormal => {
                if rng.random_bool(0.2) {
                    3.0
                } else {
                    1.0
                }
            }
        };
        row *= radial;
        row += mu.transpose();
    }
    SampleMatrix::new(x)
}

/// `n` draws of class `class_id` (1 or 2) from `pop`.
pub fn sample(pop: &PopulationPair, class_id: usize, n: usize, family: Family, seed: u64) -> Result<SampleMatrix> {
    sample_elliptical(pop.mean(class_id)?, pop.covariance(class_id)?, n, family, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_covariance;
    use approx::assert_abs_diff_eq;

    fn ar1(p: usize) -> DMatrix<f64> {
        make_precision(&PrecisionModel {
            kind: PrecisionKind::ar1(),
            p,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn ar1_entries() {
        let o = ar1(3);
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(o, want);
    }

    #[test]
    fn banded_entries() {
        let o = make_precision(&PrecisionModel {
            kind: PrecisionKind::Banded,
            p: 8,
            seed: 0,
        })
        .unwrap();
        assert_eq!(o[(0, 0)], 2.0);
        assert_eq!(o[(0, 1)], 0.8);
        assert_eq!(o[(0, 2)], 0.4);
        assert_eq!(o[(0, 3)], 0.4);
        assert_eq!(o[(0, 4)], 0.2);
        assert_eq!(o[(0, 5)], 0.0);
        assert_eq!(o[(4, 0)], 0.2);
    }

    #[test]
    fn banded_needs_five() {
        let r = make_precision(&PrecisionModel {
            kind: PrecisionKind::Banded,
            p: 4,
            seed: 0,
        });
        assert!(r.is_err());
    }

    #[test]
    fn erdos_renyi_is_positive_definite() {
        for seed in 0..5 {
            let o = make_precision(&PrecisionModel {
                kind: PrecisionKind::erdos_renyi(),
                p: 60,
                seed,
            })
            .unwrap();
            assert_eq!(o, o.transpose());
            assert!(min_eigenvalue(&o) > PD_FLOOR);
        }
    }

    #[test]
    fn erdos_renyi_shift_alone_is_psd() {
        let mut rng = rng_from(3);
        let raw = DMatrix::from_fn(30, 30, |_, _| if rng.random_bool(0.05) { 0.75 } else { 0.0 });
        let sym = symmetrize(&raw);
        let shifted = &sym + DMatrix::identity(30, 30) * (-min_eigenvalue(&sym)).max(0.0);
        assert!(min_eigenvalue(&shifted) >= -1e-12);
    }

    #[test]
    fn empty_differential_gives_equal_covariances() {
        let spec = PopulationSpec {
            s1: 0,
            ..PopulationSpec::default()
        };
        let pop = make_population(&ar1(12), &spec, 1).unwrap();
        assert_eq!(pop.sigma1, pop.sigma2);
        assert_eq!(pop.d_true, DMatrix::zeros(12, 12));
    }

    #[test]
    fn beta_matches_dense_solve() {
        let spec = PopulationSpec {
            s1: 4,
            s2: 2,
            ..PopulationSpec::default()
        };
        let pop = make_population(&ar1(5), &spec, 7).unwrap();
        let recomputed = &pop.omega2 * (&pop.mu2 - &pop.mu1);
        assert!((recomputed - &pop.beta_true).amax() < 1e-8);
        assert!((&pop.omega2 - &pop.omega1 - &pop.d_true).amax() < 1e-8);
    }

    #[test]
    fn full_scale_population_respects_sparsity() {
        let pop = make_population(&ar1(100), &PopulationSpec::default(), 11).unwrap();
        assert_eq!(pop.d_true.iter().filter(|v| **v != 0.0).count(), 10);
        assert_eq!(pop.beta_true.iter().filter(|v| **v != 0.0).count(), 10);
        assert_eq!(pop.d_true, pop.d_true.transpose());
        check_spd(&pop.sigma2, PD_FLOOR, "sigma2").unwrap();
    }

    #[test]
    fn odd_sparsity_uses_one_diagonal_entry() {
        let spec = PopulationSpec {
            s1: 7,
            ..PopulationSpec::default()
        };
        let pop = make_population(&ar1(20), &spec, 5).unwrap();
        assert_eq!(pop.d_true.iter().filter(|v| **v != 0.0).count(), 7);
        assert_eq!(pop.d_true.diagonal().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = make_population(&ar1(30), &PopulationSpec::default(), 42).unwrap();
        let b = make_population(&ar1(30), &PopulationSpec::default(), 42).unwrap();
        assert_eq!(a, b);
        let xa = sample(&a, 2, 10, Family::T5, 9).unwrap();
        let xb = sample(&b, 2, 10, Family::T5, 9).unwrap();
        assert_eq!(xa, xb);
    }

    fn covariance_error(family: Family, seed: u64) -> f64 {
        let sigma = DMatrix::from_fn(5, 5, |i, j| 0.5f64.powi(i.abs_diff(j) as i32));
        let x = sample_elliptical(&DVector::zeros(5), &sigma, 50_000, family, seed).unwrap();
        let cov = sample_covariance(x.data());
        let scale = if family == Family::MixtureNormal { 2.6 } else { 1.0 };
        (cov - &sigma * scale).norm() / (sigma * scale).norm()
    }

    #[test]
    fn normal_covariance() {
        assert!(covariance_error(Family::Normal, 1) < 0.05);
    }

    #[test]
    fn t5_covariance() {
        assert!(covariance_error(Family::T5, 2) < 0.08);
    }

    #[test]
    fn mixture_covariance_is_inflated() {
        assert!(covariance_error(Family::MixtureNormal, 3) < 0.05);
    }

    #[test]
    fn sampler_means_within_four_standard_errors() {
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5]);
        let n = 20_000;
        for (k, family) in [Family::Normal, Family::T5, Family::MixtureNormal].into_iter().enumerate() {
            let x = sample_elliptical(&mu, &sigma, n, family, 100 + k as u64).unwrap();
            let mean = x.data().row_mean();
            let var_scale = if family == Family::MixtureNormal { 2.6 } else { 1.0 };
            for j in 0..3 {
                let se = (sigma[(j, j)] * var_scale / n as f64).sqrt();
                assert!((mean[j] - mu[j]).abs() < 4.0 * se, "{family:?} coord {j}");
            }
        }
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(7, &[0]), derive_seed(7, &[1]));
        assert_ne!(derive_seed(7, &[0, 1]), derive_seed(7, &[1, 0]));
        assert_abs_diff_eq!(derive_seed(7, &[3]) as f64, derive_seed(7, &[3]) as f64);
    }
}
