//! Basic clonality estimators built from cross-replicate inner products.
//!
//! For distinct replicates `l ≠ m` the product `θ_(l,m) = (p_l, p_m)` is
//! conditionally unbiased for `θ`, because the replicate errors are
//! independent with mean zero. The weighted average
//!
//! ```text
//! θ̂* = Σ_{l≠m} C_l C_m θ_(l,m) / Σ_{l≠m} C_l C_m
//! ```
//!
//! is the baseline estimator. Including the diagonal `l = m` adds the error
//! variance `E‖ε_l‖²`; that excess is what [`epsilon_profile`] measures.

use serde::{Deserialize, Serialize};

use crate::model::{Gram, ReplicateStudy};
use crate::{Error, Result};

/// Unordered replicate pairs `(k, l)`, `k < l`, in lexicographic order:
/// `(0,1), (0,2), …, (0,n−1), (1,2), …`. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        let pairs = (0..n).flat_map(|k| (k + 1..n).map(move |l| (k, l))).collect();
        Self { n, pairs }
    }

    /// Number of replicates.
    pub fn replicates(&self) -> usize {
        self.n
    }

    /// `n(n−1)/2`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Position of the unordered pair `{a, b}`; `None` when `a == b` or out
    /// of range.
    pub fn position(&self, a: usize, b: usize) -> Option<usize> {
        let (k, l) = if a < b { (a, b) } else { (b, a) };
        if k == l || l >= self.n {
            return None;
        }
        // Pairs starting below k: Σ_{i<k} (n−1−i).
        let before = k * (2 * self.n - k - 1) / 2;
        Some(before + (l - k - 1))
    }

    /// One-based `"(k,l)"` labels, used in matrix dumps.
    pub fn labels(&self) -> Vec<String> {
        self.pairs
            .iter()
            .map(|&(k, l)| format!("({},{})", k + 1, l + 1))
            .collect()
    }
}

/// `θ_(l,m)` for every unordered replicate pair, with weights `C_l C_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseThetaTable {
    pub pairs: PairIndex,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PairwiseThetaTable {
    /// `θ_(a,b)`, symmetric in its arguments.
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.pairs.position(a, b).map(|i| self.values[i])
    }

    pub(crate) fn from_gram(gram: &Gram) -> Self {
        let pairs = PairIndex::new(gram.n());
        let values = pairs.pairs().iter().map(|&(k, l)| gram.g[(k, l)]).collect();
        let weights = pairs
            .pairs()
            .iter()
            .map(|&(k, l)| gram.richness[k] * gram.richness[l])
            .collect();
        Self { pairs, values, weights }
    }
}

/// Cross-replicate inner products `θ_(l,m) = Σ_j p_l(j) p_m(j)`.
pub fn pairwise_theta(study: &ReplicateStudy) -> PairwiseThetaTable {
    PairwiseThetaTable::from_gram(&study.gram())
}

/// The `C_l C_m`-weighted mean of the pairwise products.
pub fn theta_star(table: &PairwiseThetaTable) -> Result<f64> {
    let total: f64 = table.weights.iter().sum();
    if table.values.is_empty() || total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    // Summing sorted terms makes the result independent of replicate order.
    let mut terms: Vec<f64> = table.values.iter().zip(&table.weights).map(|(v, w)| v * w).collect();
    terms.sort_by(f64::total_cmp);
    let mut weights = table.weights.clone();
    weights.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>() / weights.iter().sum::<f64>())
}

/// `n⁻¹ Σ_i ‖p_i‖²`. Biased upward by the mean error norm; diagnostic only.
pub fn naive_plugin(study: &ReplicateStudy) -> f64 {
    naive_from_gram(&study.gram())
}

pub(crate) fn naive_from_gram(gram: &Gram) -> f64 {
    gram.g.diagonal().iter().sum::<f64>() / gram.n() as f64
}

/// How a raw diagonal excess `‖p_k‖² − b` is turned into an error-norm
/// estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Thresholding {
    /// Keep the raw difference, which may be negative.
    Raw,
    /// Hard thresholding: clip at zero.
    PositiveExpectation,
    /// Soft thresholding: absolute value.
    SphericalShells,
}

impl Thresholding {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Thresholding::Raw => x,
            Thresholding::PositiveExpectation => x.max(0.0),
            Thresholding::SphericalShells => x.abs(),
        }
    }
}

/// Per-replicate estimates of `E(‖ε_k‖² | p, {C_i})`, with their mean `ε̄`
/// and smallest entry `ε_*`.
///
/// Entries are nonnegative except for profiles built with
/// [`Thresholding::Raw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonProfile {
    pub per_replicate: Vec<f64>,
    pub mean: f64,
    pub minimum: f64,
}

impl EpsilonProfile {
    pub fn new(per_replicate: Vec<f64>) -> Self {
        let mean = per_replicate.iter().sum::<f64>() / per_replicate.len() as f64;
        let minimum = per_replicate.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            per_replicate,
            mean,
            minimum,
        }
    }

    pub fn len(&self) -> usize {
        self.per_replicate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_replicate.is_empty()
    }
}

/// The common off-diagonal level `b = θ_ref − Ĉ⁻²` (or `θ_ref` without a
/// richness estimate).
pub fn common_level(theta_ref: f64, chao_c: Option<f64>) -> f64 {
    match chao_c {
        Some(c) if c > 0.0 => theta_ref - 1.0 / (c * c),
        _ => theta_ref,
    }
}

/// Moment-matching error-norm estimates `ε̂²_k = ‖p_k‖² − b`, thresholded.
pub fn epsilon_profile(
    study: &ReplicateStudy,
    theta_ref: f64,
    thresholding: Thresholding,
    chao_c: Option<f64>,
) -> EpsilonProfile {
    profile_from_gram(&study.gram(), theta_ref, thresholding, chao_c)
}

pub(crate) fn profile_from_gram(
    gram: &Gram,
    theta_ref: f64,
    thresholding: Thresholding,
    chao_c: Option<f64>,
) -> EpsilonProfile {
    debug_assert!((0.0..=1.0).contains(&theta_ref));
    let b = common_level(theta_ref, chao_c);
    EpsilonProfile::new(gram.g.diagonal().iter().map(|&d| thresholding.apply(d - b)).collect())
}

/// Incidence-based Chao richness with replicates as sampling occasions:
/// `Ĉ = S_obs + Q₁(Q₁−1) / (2(Q₂+1))`, where `Q₁`/`Q₂` count the clones
/// seen in exactly one/two replicates. Finite when `Q₂ = 0`.
pub fn chao_richness(study: &ReplicateStudy) -> f64 {
    let incidence = study.incidence();
    let q1 = incidence.iter().filter(|&&c| c == 1).count();
    let q2 = incidence.iter().filter(|&&c| c == 2).count();
    chao_from_frequencies(incidence.len(), q1, q2)
}

pub(crate) fn chao_from_frequencies(s_obs: usize, q1: usize, q2: usize) -> f64 {
    let q1 = q1 as f64;
    s_obs as f64 + q1 * (q1 - 1.0).max(0.0) / (2.0 * (q2 as f64 + 1.0))
}
