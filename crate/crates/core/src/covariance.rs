//! Pair covariances, their stabilized variants, and best linear unbiased
//! combination.
//!
//! Given error-norm estimates `ε̂²_k`, the conditional covariance of two
//! pairwise products `θ_(k,l)` and `θ_(k′,l′)` is modelled, up to a common
//! positive factor, as
//!
//! ```text
//! 0              if {k,l} ∩ {k′,l′} = ∅
//! ε̂²_s           if the pairs share exactly the replicate s
//! ε̂²_k + ε̂²_l    if (k,l) = (k′,l′)
//! ```
//!
//! The common factor never needs estimating: the combiner
//! `(1ᵀR⁻¹x) / (1ᵀR⁻¹1)` is invariant to `R → cR`.
//!
//! The model matrix equals `B diag(ε̂²) Bᵀ` for the pair/replicate incidence
//! matrix `B`, so its rank is at most `n` while it has `n(n−1)/2` rows. For
//! `n ≥ 4` it is always singular; solving against it goes through the
//! diagonal-loading retry of [`robust_blue`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::estimators::{common_level, EpsilonProfile, PairIndex, PairwiseThetaTable, Thresholding};
use crate::model::{Gram, ReplicateStudy};
use crate::{Error, Result};

/// Largest accepted `λ_max / λ_min` before a matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative size of the ridge added by the diagonal-loading retry:
/// `R + LOADING · tr(R)/m · I`.
pub const LOADING: f64 = 1e-10;

/// Covariance of the pairwise products, indexed by [`PairIndex`], known
/// only up to a positive scale factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCovarianceModel {
    pub pairs: PairIndex,
    pub matrix: DMatrix<f64>,
    /// Always `true` for models built here: entries omit the common
    /// `θψ̄` factor.
    pub up_to_scale: bool,
}

/// Structured stabilizer mixed 50/50 with the pair-covariance model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TMatrixKind {
    /// `ε̄ I`.
    T1,
    /// `diag(Σ̂⁽⁰⁾)`.
    T2,
    /// `Σ̂⁽⁰⁾` with every shared-index entry replaced by `ε_*`.
    T3,
}

/// Number of replicate indices two pairs have in common.
fn shared(a: (usize, usize), b: (usize, usize)) -> Option<usize> {
    match (a.0 == b.0 || a.0 == b.1, a.1 == b.0 || a.1 == b.1) {
        (true, false) => Some(a.0),
        (false, true) => Some(a.1),
        _ => None,
    }
}

/// The unregularized pair covariance `Σ̂⁽⁰⁾`.
pub fn build_sigma0(profile: &EpsilonProfile, n: usize) -> Result<PairCovarianceModel> {
    if n < 3 {
        return Err(Error::TooFewReplicates { needed: 3, got: n });
    }
    if profile.len() != n {
        return Err(Error::InvalidSpec(format!(
            "profile has {} entries for {n} replicates",
            profile.len()
        )));
    }
    let eps = &profile.per_replicate;
    let pairs = PairIndex::new(n);
    let p = pairs.pairs();
    let matrix = DMatrix::from_fn(pairs.len(), pairs.len(), |i, j| {
        if i == j {
            eps[p[i].0] + eps[p[i].1]
        } else {
            shared(p[i], p[j]).map_or(0.0, |s| eps[s])
        }
    });
    Ok(PairCovarianceModel {
        pairs,
        matrix,
        up_to_scale: true,
    })
}

/// One of the three stabilizers, on the same scale as `sigma0`.
pub fn build_t(kind: TMatrixKind, sigma0: &PairCovarianceModel, profile: &EpsilonProfile) -> PairCovarianceModel {
    let m = sigma0.pairs.len();
    let matrix = match kind {
        TMatrixKind::T1 => DMatrix::identity(m, m) * profile.mean,
        TMatrixKind::T2 => DMatrix::from_diagonal(&sigma0.matrix.diagonal()),
        TMatrixKind::T3 => {
            let p = sigma0.pairs.pairs();
            DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    sigma0.matrix[(i, i)]
                } else if shared(p[i], p[j]).is_some() {
                    profile.minimum
                } else {
                    0.0
                }
            })
        }
    };
    PairCovarianceModel {
        pairs: sigma0.pairs.clone(),
        matrix,
        up_to_scale: true,
    }
}

/// `(Σ̂⁽⁰⁾ + T)/2`.
pub fn mix(sigma0: &PairCovarianceModel, t: &PairCovarianceModel) -> PairCovarianceModel {
    PairCovarianceModel {
        pairs: sigma0.pairs.clone(),
        matrix: (&sigma0.matrix + &t.matrix) * 0.5,
        up_to_scale: true,
    }
}

/// Result of a best-linear-unbiased combination.
#[derive(Debug, Clone, PartialEq)]
pub struct BlueFit {
    pub estimate: f64,
    /// `R⁻¹1 / (1ᵀR⁻¹1)`; sums to one.
    pub weights: Vec<f64>,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Solved against `R` itself.
    Direct,
    /// `R` was singular or ill-conditioned; solved against `R + δI`.
    Loaded,
}

/// `λ_max / λ_min` of a symmetric matrix; infinite when `λ_min ≤ 0`.
pub fn condition_number(r: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(r.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(r: &DMatrix<f64>) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(r.clone()).eigenvalues.min()
}

fn solve_weights(r: &DMatrix<f64>) -> Option<DVector<f64>> {
    let chol = r.clone().cholesky()?;
    let w = chol.solve(&DVector::from_element(r.nrows(), 1.0));
    let total = w.sum();
    (total.is_finite() && total > 0.0).then(|| w / total)
}

fn check_shapes(x: &[f64], r: &DMatrix<f64>) -> Result<()> {
    if x.is_empty() || r.nrows() != x.len() || r.ncols() != x.len() {
        return Err(Error::InvalidSpec(format!(
            "{} estimates against a {}×{} covariance",
            x.len(),
            r.nrows(),
            r.ncols()
        )));
    }
    Ok(())
}

/// `(1ᵀR⁻¹x) / (1ᵀR⁻¹1)`, by a Cholesky solve of `R w = 1`.
///
/// Fails with [`Error::SingularCovariance`] when `R` is not positive definite
/// or its condition number exceeds [`MAX_CONDITION`].
pub fn blue_combine(x: &[f64], r: &DMatrix<f64>) -> Result<BlueFit> {
    check_shapes(x, r)?;
    if condition_number(r) > MAX_CONDITION {
        return Err(Error::SingularCovariance);
    }
    let w = solve_weights(r).ok_or(Error::SingularCovariance)?;
    Ok(fit(x, w, SolveStatus::Direct))
}

/// [`blue_combine`], retrying once against `R + LOADING·tr(R)/m·I` when `R`
/// is singular. The loaded matrix only has to admit a Cholesky factor.
pub fn robust_blue(x: &[f64], r: &DMatrix<f64>) -> Result<BlueFit> {
    match blue_combine(x, r) {
        Err(Error::SingularCovariance) => {
            let m = r.nrows();
            let delta = LOADING * r.trace() / m as f64;
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(Error::SingularCovariance);
            }
            let loaded = r + DMatrix::identity(m, m) * delta;
            let w = solve_weights(&loaded).ok_or(Error::SingularCovariance)?;
            Ok(fit(x, w, SolveStatus::Loaded))
        }
        other => other,
    }
}

fn fit(x: &[f64], w: DVector<f64>, status: SolveStatus) -> BlueFit {
    let estimate = w.iter().zip(x).map(|(w, x)| w * x).sum();
    BlueFit {
        estimate,
        weights: w.iter().copied().collect(),
        status,
    }
}

/// How a pairwise BLUE estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateStatus {
    Direct,
    Loaded,
    /// No usable covariance; the value is `θ̂*`.
    FallbackThetaStar,
}

impl From<SolveStatus> for EstimateStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Direct => EstimateStatus::Direct,
            SolveStatus::Loaded => EstimateStatus::Loaded,
        }
    }
}

/// BLUE over the pairwise products, falling back to `θ̂*` when the
/// covariance cannot be used even after loading.
pub fn blue_pairs(table: &PairwiseThetaTable, cov: &PairCovarianceModel) -> Result<(f64, EstimateStatus)> {
    if table.pairs != cov.pairs {
        return Err(Error::InvalidSpec(
            "pair table and covariance are indexed differently".into(),
        ));
    }
    match robust_blue(&table.values, &cov.matrix) {
        Ok(f) => Ok((f.estimate, f.status.into())),
        Err(Error::SingularCovariance) => {
            Ok((crate::estimators::theta_star(table)?, EstimateStatus::FallbackThetaStar))
        }
        Err(e) => Err(e),
    }
}

/// Regularization of the common replicate covariance `b·J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `b·J + [diag(G) − b·I]₊` ("positive expectation").
    Hard,
    /// `b·J + |diag(G) − b·I|` ("spherical shells").
    Soft,
    /// Off-diagonals of `G` shrunk toward `b` with a data-driven intensity.
    Shrink,
}

impl Regularizer {
    pub const ALL: [Regularizer; 3] = [Regularizer::Hard, Regularizer::Soft, Regularizer::Shrink];

    pub fn name(self) -> &'static str {
        match self {
            Regularizer::Hard => "hard",
            Regularizer::Soft => "soft",
            Regularizer::Shrink => "shrink",
        }
    }
}

impl std::fmt::Display for Regularizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(Regularizer::Hard),
            "soft" => Ok(Regularizer::Soft),
            "shrink" => Ok(Regularizer::Shrink),
            _ => Err(Error::InvalidSpec(format!("unknown regularizer {s:?}"))),
        }
    }
}

/// A regularized `n×n` replicate covariance around the common level `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateCovariance {
    pub matrix: DMatrix<f64>,
    pub level: f64,
    /// Shrinkage intensity `λ ∈ [0, 1]`; `None` for hard and soft.
    pub intensity: Option<f64>,
}

impl ReplicateCovariance {
    /// Error-norm estimates induced by the regularized matrix: each diagonal
    /// entry minus the mean off-diagonal entry of its row, clipped at zero.
    /// For hard and soft the off-diagonals all equal `b`, so this is the
    /// thresholded diagonal excess.
    pub fn induced_profile(&self) -> EpsilonProfile {
        let n = self.matrix.nrows();
        EpsilonProfile::new(
            (0..n)
                .map(|k| {
                    let off: f64 = (0..n).filter(|&l| l != k).map(|l| self.matrix[(k, l)]).sum();
                    let off = if n > 1 { off / (n - 1) as f64 } else { self.level };
                    (self.matrix[(k, k)] - off).max(0.0)
                })
                .collect(),
        )
    }
}

/// Regularized estimate of the common replicate covariance, in frequency
/// units, with `G = X′X` and `b = θ̂* − Ĉ⁻²`.
pub fn regularize_replicate_cov(
    study: &ReplicateStudy,
    theta_star: f64,
    chao_c: Option<f64>,
    method: Regularizer,
) -> ReplicateCovariance {
    regularize_gram(&study.gram(), theta_star, chao_c, method)
}

pub(crate) fn regularize_gram(
    gram: &Gram,
    theta_star: f64,
    chao_c: Option<f64>,
    method: Regularizer,
) -> ReplicateCovariance {
    let n = gram.n();
    let b = common_level(theta_star, chao_c);
    let thresholded =
        |t: Thresholding| DMatrix::from_fn(n, n, |k, l| if k == l { b + t.apply(gram.g[(k, k)] - b) } else { b });
    match method {
        Regularizer::Hard => ReplicateCovariance {
            matrix: thresholded(Thresholding::PositiveExpectation),
            level: b,
            intensity: None,
        },
        Regularizer::Soft => ReplicateCovariance {
            matrix: thresholded(Thresholding::SphericalShells),
            level: b,
            intensity: None,
        },
        Regularizer::Shrink => {
            let lambda = shrinkage_intensity(gram, b);
            let matrix = DMatrix::from_fn(n, n, |k, l| {
                if k == l {
                    gram.g[(k, k)]
                } else {
                    (1.0 - lambda) * gram.g[(k, l)] + lambda * b
                }
            });
            ReplicateCovariance {
                matrix,
                level: b,
                intensity: Some(lambda),
            }
        }
    }
}

/// `λ = clamp(Σ Var̂(G_kl) / Σ (G_kl − b)², 0, 1)` over off-diagonal
/// entries. `G_kl` is a sum of `U` per-clone products `w_j`, so its variance
/// is estimated as `U/(U−1) · (Σ w_j² − G_kl²/U)`.
pub(crate) fn shrinkage_intensity(gram: &Gram, b: f64) -> f64 {
    let n = gram.n();
    let u = gram.universe_size as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        for l in k + 1..n {
            let g = gram.g[(k, l)];
            if u > 1.0 {
                num += (u / (u - 1.0) * (gram.h[(k, l)] - g * g / u)).max(0.0);
            }
            den += (g - b) * (g - b);
        }
    }
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(v: &[f64]) -> EpsilonProfile {
        EpsilonProfile::new(v.to_vec())
    }

    /// Case enumeration straight from the index sets of the two pairs.
    fn sigma0_oracle(eps: &[f64], a: (usize, usize), b: (usize, usize)) -> f64 {
        let sa = [a.0, a.1];
        let sb = [b.0, b.1];
        sa.iter().filter(|i| sb.contains(i)).map(|&i| eps[i]).sum()
    }

    #[test]
    fn sigma0_three_replicates() {
        let (a, b, c) = (0.3, 0.5, 0.7);
        let s = build_sigma0(&profile(&[a, b, c]), 3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[a + b, a, b, a, a + c, c, b, c, b + c]);
        assert_eq!(s.matrix, expected);
        assert!(s.up_to_scale);
    }

    #[test]
    fn sigma0_matches_oracle_and_disjoint_zero() {
        let eps = [0.1, 0.2, 0.4, 0.8, 1.6];
        let s = build_sigma0(&profile(&eps), 5).unwrap();
        let p = s.pairs.pairs();
        for i in 0..p.len() {
            for j in 0..p.len() {
                assert_eq!(s.matrix[(i, j)], sigma0_oracle(&eps, p[i], p[j]));
            }
        }
        let s4 = build_sigma0(&profile(&eps[..4]), 4).unwrap();
        let i = s4.pairs.position(0, 1).unwrap();
        let j = s4.pairs.position(2, 3).unwrap();
        assert_eq!(s4.matrix[(i, j)], 0.0);
    }

    #[test]
    fn sigma0_equal_errors() {
        let s = build_sigma0(&profile(&[0.2; 4]), 4).unwrap();
        let p = s.pairs.pairs();
        for i in 0..p.len() {
            assert_eq!(s.matrix[(i, i)], 0.4);
            for j in 0..p.len() {
                if i != j && shared(p[i], p[j]).is_some() {
                    assert_eq!(s.matrix[(i, j)], 0.2);
                }
            }
        }
    }

    #[test]
    fn sigma0_needs_three() {
        assert!(matches!(
            build_sigma0(&profile(&[0.1, 0.2]), 2),
            Err(Error::TooFewReplicates { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn t_matrices() {
        let prof = profile(&[0.5, 0.5, 0.5]);
        let s = build_sigma0(&prof, 3).unwrap();
        assert_eq!(
            build_t(TMatrixKind::T1, &s, &prof).matrix,
            DMatrix::identity(3, 3) * 0.5
        );

        let (a, b, c) = (0.3, 0.5, 0.7);
        let prof = profile(&[a, b, c]);
        let s = build_sigma0(&prof, 3).unwrap();
        let t2 = build_t(TMatrixKind::T2, &s, &prof);
        assert_eq!(
            t2.matrix,
            DMatrix::from_diagonal(&DVector::from_vec(vec![a + b, a + c, b + c]))
        );

        let eps = [0.4, 0.9, 0.2, 0.6];
        let prof = profile(&eps);
        let s = build_sigma0(&prof, 4).unwrap();
        let t3 = build_t(TMatrixKind::T3, &s, &prof);
        let i = s.pairs.position(0, 1).unwrap();
        let j = s.pairs.position(0, 2).unwrap();
        assert_eq!(t3.matrix[(i, j)], 0.2);
        assert_eq!(t3.matrix[(i, i)], 0.4 + 0.9);
        let k = s.pairs.position(2, 3).unwrap();
        assert_eq!(t3.matrix[(i, k)], 0.0);
    }

    #[test]
    fn blue_examples() {
        let fit = blue_combine(&[1.0, 2.0, 3.0], &DMatrix::identity(3, 3)).unwrap();
        assert!((fit.estimate - 2.0).abs() < 1e-15);
        assert_eq!(fit.status, SolveStatus::Direct);

        // 2×2 by hand: w ∝ (1, 1/4) → (1 + 0.5)/1.25.
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let fit = blue_combine(&[1.0, 2.0], &r).unwrap();
        assert!((fit.estimate - 1.2).abs() < 1e-15);
        assert!((fit.weights[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn blue_rejects_singular() {
        let r = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(blue_combine(&[1.0, 2.0], &r), Err(Error::SingularCovariance)));
        let fit = robust_blue(&[1.0, 2.0], &r).unwrap();
        assert_eq!(fit.status, SolveStatus::Loaded);
        assert!((fit.estimate - 1.5).abs() < 1e-9);
        assert!(robust_blue(&[1.0, 2.0], &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn blue_shape_mismatch() {
        assert!(matches!(
            blue_combine(&[1.0, 2.0], &DMatrix::identity(3, 3)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn blue_pairs_identity_and_equal_errors() {
        let pairs = PairIndex::new(5);
        let m = pairs.len();
        let table = PairwiseThetaTable {
            values: (0..m).map(|i| 0.2 + 0.01 * i as f64).collect(),
            weights: vec![1.0; m],
            pairs: pairs.clone(),
        };
        let mean = table.values.iter().sum::<f64>() / m as f64;
        let ident = PairCovarianceModel {
            pairs: pairs.clone(),
            matrix: DMatrix::identity(m, m),
            up_to_scale: true,
        };
        let (est, status) = blue_pairs(&table, &ident).unwrap();
        assert!((est - mean).abs() < 1e-14);
        assert_eq!(status, EstimateStatus::Direct);

        // Equal errors: every mixture is invariant under relabeling the
        // replicates, so the BLUE weights are equal. Check against the mean
        // and against blue_combine on the same matrix. With equal errors T3
        // coincides with the singular Σ̂⁽⁰⁾, so it is checked with Σ̂⁽⁰⁾ below.
        let prof = profile(&[0.3; 5]);
        let s0 = build_sigma0(&prof, 5).unwrap();
        assert_eq!(build_t(TMatrixKind::T3, &s0, &prof).matrix, s0.matrix);
        for kind in [TMatrixKind::T1, TMatrixKind::T2] {
            let cov = mix(&s0, &build_t(kind, &s0, &prof));
            let (est, _) = blue_pairs(&table, &cov).unwrap();
            assert!((est - mean).abs() < 1e-10, "{kind:?}");
            let direct = blue_combine(&table.values, &cov.matrix).unwrap();
            assert!((direct.estimate - est).abs() < 1e-14);
        }
        let (est, status) = blue_pairs(&table, &s0).unwrap();
        assert_eq!(status, EstimateStatus::Loaded);
        assert!((est - mean).abs() < 1e-8);
    }

    #[test]
    fn blue_pairs_downweights_noisy_replicates() {
        // Replicate 0 is far cleaner than 1 and 2: pairs containing it should
        // gain weight as its error shrinks.
        let mut last = 0.0;
        for a in [0.5, 0.2, 0.05, 0.01] {
            let prof = profile(&[a, 1.0, 1.3]);
            let s0 = build_sigma0(&prof, 3).unwrap();
            let cov = mix(&s0, &build_t(TMatrixKind::T1, &s0, &prof));
            let fit = blue_combine(&[0.0, 0.0, 1.0], &cov.matrix).unwrap();
            let w_clean = fit.weights[0] + fit.weights[1];
            assert!(w_clean > last, "weight on pairs with the clean replicate: {w_clean}");
            last = w_clean;
        }
    }

    #[test]
    fn blue_pairs_falls_back_to_theta_star() {
        let pairs = PairIndex::new(3);
        let table = PairwiseThetaTable {
            values: vec![0.1, 0.2, 0.3],
            weights: vec![2.0, 3.0, 6.0],
            pairs: pairs.clone(),
        };
        let zero = PairCovarianceModel {
            pairs,
            matrix: DMatrix::zeros(3, 3),
            up_to_scale: true,
        };
        let (est, status) = blue_pairs(&table, &zero).unwrap();
        assert_eq!(status, EstimateStatus::FallbackThetaStar);
        assert!((est - 2.6 / 11.0).abs() < 1e-15);
    }

    fn gram_fixture(diag: &[f64], off: f64) -> Gram {
        let n = diag.len();
        Gram {
            g: DMatrix::from_fn(n, n, |k, l| if k == l { diag[k] } else { off }),
            h: DMatrix::from_element(n, n, off * off / 10.0),
            richness: vec![10.0; n],
            universe_size: 10,
        }
    }

    #[test]
    fn hard_and_soft_agree_above_level() {
        let g = gram_fixture(&[0.31, 0.35, 0.30], 0.3);
        let hard = regularize_gram(&g, 0.3, None, Regularizer::Hard);
        let soft = regularize_gram(&g, 0.3, None, Regularizer::Soft);
        assert_eq!(hard.matrix, soft.matrix);
        assert_eq!(hard.matrix[(2, 2)], 0.3);
        assert_eq!(hard.matrix[(0, 1)], 0.3);
    }

    #[test]
    fn hard_and_soft_below_level() {
        let g = gram_fixture(&[0.28, 0.35, 0.30], 0.3);
        let hard = regularize_gram(&g, 0.3, None, Regularizer::Hard);
        let soft = regularize_gram(&g, 0.3, None, Regularizer::Soft);
        assert_eq!(hard.matrix[(0, 0)], 0.3);
        assert!((soft.matrix[(0, 0)] - 0.32).abs() < 1e-15);
        let prof = hard.induced_profile();
        assert_eq!(prof.per_replicate[0], 0.0);
        assert!((soft.induced_profile().per_replicate[0] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn shrink_with_zero_variance_keeps_gram() {
        let mut g = gram_fixture(&[0.4, 0.5, 0.45], 0.3);
        // Each off-diagonal inner product spread evenly over the universe:
        // Σ w² = G²/U, so the per-entry variance estimate is zero.
        g.h = DMatrix::from_element(3, 3, 0.3 * 0.3 / 10.0);
        let s = regularize_gram(&g, 0.25, None, Regularizer::Shrink);
        assert_eq!(s.intensity, Some(0.0));
        assert_eq!(s.matrix, g.g);
    }

    #[test]
    fn shrink_moves_toward_level() {
        let mut g = gram_fixture(&[0.4, 0.5, 0.45], 0.3);
        g.h = DMatrix::from_element(3, 3, 0.3 * 0.3 / 2.0);
        let s = regularize_gram(&g, 0.25, None, Regularizer::Shrink);
        let lambda = s.intensity.unwrap();
        assert!(lambda > 0.0 && lambda <= 1.0);
        let expected = (1.0 - lambda) * 0.3 + lambda * 0.25;
        assert!((s.matrix[(0, 1)] - expected).abs() < 1e-15);
        assert_eq!(s.matrix[(1, 1)], 0.5);
    }

    fn spd_strategy() -> impl Strategy<Value = (Vec<f64>, DMatrix<f64>)> {
        (2usize..7).prop_flat_map(|m| {
            (
                prop::collection::vec(-1.0f64..1.0, m),
                prop::collection::vec(-1.0f64..1.0, m * m),
                0.1f64..2.0,
            )
                .prop_map(move |(x, a, ridge)| {
                    let a = DMatrix::from_vec(m, m, a);
                    let r = &a * a.transpose() + DMatrix::identity(m, m) * ridge;
                    (x, r)
                })
        })
    }

    proptest! {
        #[test]
        fn blue_scale_invariant((x, r) in spd_strategy(), c in 1e-3f64..1e3) {
            let a = blue_combine(&x, &r).unwrap().estimate;
            let b = blue_combine(&x, &(&r * c)).unwrap().estimate;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn blue_permutation_invariant((x, r) in spd_strategy()) {
            let m = x.len();
            let perm: Vec<usize> = (0..m).rev().collect();
            let xp: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let rp = DMatrix::from_fn(m, m, |i, j| r[(perm[i], perm[j])]);
            let a = blue_combine(&x, &r).unwrap().estimate;
            let b = blue_combine(&xp, &rp).unwrap().estimate;
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn blue_exchangeable_is_mean(
            x in prop::collection::vec(-1.0f64..1.0, 2..8),
            sigma2 in 0.01f64..2.0,
            frac in 0.0f64..1.0,
        ) {
            let m = x.len();
            // γ ranges over [−σ²/m, σ²) so R stays positive definite.
            let gamma = -sigma2 / m as f64 * 0.999 + frac * sigma2 * 1.999;
            let r = DMatrix::identity(m, m) * sigma2 + DMatrix::from_element(m, m, gamma);
            let mean = x.iter().sum::<f64>() / m as f64;
            let fit = blue_combine(&x, &r).unwrap();
            prop_assert!((fit.estimate - mean).abs() < 1e-10);
        }

        #[test]
        fn regularized_levels(
            diag in prop::collection::vec(0.0f64..1.0, 2..7),
            theta in 0.0f64..1.0,
        ) {
            let g = gram_fixture(&diag, 0.2);
            for method in [Regularizer::Hard, Regularizer::Soft] {
                let r = regularize_gram(&g, theta, None, method);
                for k in 0..diag.len() {
                    prop_assert!(r.matrix[(k, k)] >= r.level);
                    for l in 0..diag.len() {
                        if k != l {
                            prop_assert_eq!(r.matrix[(k, l)], r.level);
                        }
                    }
                }
            }
        }
    }
}
