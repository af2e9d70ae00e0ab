//! The five-estimator mixture.
//!
//! For one regularizer the quintet is
//!
//! | slot | estimator | covariance used over the pairs |
//! |------|-----------|--------------------------------|
//! | 0 | `θ̂⁽⁰⁾` | `Σ̂⁽⁰⁾` |
//! | 1 | `θ̂*` | (weighted by `C_l C_m`) |
//! | 2 | `θ̂⁽¹⁾` | `(Σ̂⁽⁰⁾ + T⁽¹⁾)/2` |
//! | 3 | `θ̂⁽²⁾` | `(Σ̂⁽⁰⁾ + T⁽²⁾)/2` |
//! | 4 | `θ̂⁽³⁾` | `(Σ̂⁽⁰⁾ + T⁽³⁾)/2` |
//!
//! Replicates are the jackknife sampling units. Deleting each replicate in
//! turn gives `n` quintets; their covariance is the `5×5` matrix used to
//! combine the (bias-corrected) full-data quintet into the final estimate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{
    build_sigma0, build_t, mix, regularize_gram, robust_blue, EstimateStatus, PairCovarianceModel, Regularizer,
    TMatrixKind,
};
use crate::estimators::{chao_richness, naive_from_gram, theta_star, PairwiseThetaTable};
use crate::model::{Gram, ReplicateStudy};
use crate::{Error, Result};

/// Fewest replicates for the quintet (`T⁽³⁾` needs four distinct indices).
pub const MIN_QUINTET_REPLICATES: usize = 4;
/// Fewest replicates for the jackknife mixture (each deletion keeps a quintet).
pub const MIN_MIXTURE_REPLICATES: usize = 5;

/// Names of the quintet slots, in order.
pub const QUINTET_NAMES: [&str; 5] = ["theta0", "theta_star", "theta1", "theta2", "theta3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinerOptions {
    /// Subtract `Ĉ⁻²` from `θ̂*` when forming the common covariance level.
    pub chao_correction: bool,
    /// Jackknife bias correction of `θ̂⁽⁰⁾ … θ̂⁽³⁾`.
    pub bias_correction: bool,
}

impl Default for CombinerOptions {
    fn default() -> Self {
        Self {
            chao_correction: true,
            bias_correction: true,
        }
    }
}

/// The five estimates of `θ` for one regularizer. Values are not clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorQuintet {
    pub theta0: f64,
    pub theta_star: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// How each slot was solved, in [`QUINTET_NAMES`] order.
    pub status: [EstimateStatus; 5],
    /// Set when there were too few replicates and every slot is `θ̂*`.
    pub reduced: bool,
}

impl EstimatorQuintet {
    pub fn values(&self) -> [f64; 5] {
        [self.theta0, self.theta_star, self.theta1, self.theta2, self.theta3]
    }

    fn fallback(theta_star: f64) -> Self {
        Self {
            theta0: theta_star,
            theta_star,
            theta1: theta_star,
            theta2: theta_star,
            theta3: theta_star,
            status: [EstimateStatus::FallbackThetaStar; 5],
            reduced: true,
        }
    }
}

/// Study-level quantities shared by every regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyStatistics {
    /// In [`Gram::canonical_order`], which makes every downstream result
    /// exactly invariant to the order replicates are given in.
    pub gram: Gram,
    pub theta_star: f64,
    pub naive: f64,
    pub chao: f64,
    pub options: CombinerOptions,
}

impl StudyStatistics {
    pub fn new(study: &ReplicateStudy, options: CombinerOptions) -> Result<Self> {
        let gram = study.gram().canonical();
        let theta_star = theta_star(&PairwiseThetaTable::from_gram(&gram))?;
        Ok(Self {
            naive: naive_from_gram(&gram),
            chao: chao_richness(study),
            gram,
            theta_star,
            options,
        })
    }

    fn chao_term(&self) -> Option<f64> {
        self.options.chao_correction.then_some(self.chao)
    }
}

/// `θ̂*`, the error-norm profile induced by `regularizer`, `Σ̂⁽⁰⁾` and its
/// three mixtures, each combined over the pairwise products.
pub fn estimate_quintet(
    study: &ReplicateStudy,
    regularizer: Regularizer,
    options: CombinerOptions,
) -> Result<EstimatorQuintet> {
    let stats = StudyStatistics::new(study, options)?;
    quintet_from_gram(&stats.gram, regularizer, stats.chao_term())
}

pub(crate) fn quintet_from_gram(gram: &Gram, regularizer: Regularizer, chao: Option<f64>) -> Result<EstimatorQuintet> {
    let table = PairwiseThetaTable::from_gram(gram);
    let ts = theta_star(&table)?;
    let n = gram.n();
    if n < MIN_QUINTET_REPLICATES {
        return Ok(EstimatorQuintet::fallback(ts));
    }
    let profile = regularize_gram(gram, ts, chao, regularizer).induced_profile();
    let sigma0 = build_sigma0(&profile, n)?;
    let combine = |cov: &PairCovarianceModel| crate::covariance::blue_pairs(&table, cov);
    let (theta0, s0) = combine(&sigma0)?;
    let mut out = [(0.0, EstimateStatus::Direct); 3];
    for (slot, kind) in [TMatrixKind::T1, TMatrixKind::T2, TMatrixKind::T3]
        .into_iter()
        .enumerate()
    {
        out[slot] = combine(&mix(&sigma0, &build_t(kind, &sigma0, &profile)))?;
    }
    Ok(EstimatorQuintet {
        theta0,
        theta_star: ts,
        theta1: out[0].0,
        theta2: out[1].0,
        theta3: out[2].0,
        status: [s0, EstimateStatus::Direct, out[0].1, out[1].1, out[2].1],
        reduced: false,
    })
}

/// Full-data quintet, the `n` delete-one quintets, and their `5×5`
/// jackknife covariance `((n−1)/n) Σ_i (q_i − q̄)(q_i − q̄)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeEnsemble {
    pub full: EstimatorQuintet,
    pub leave_one_out: Vec<EstimatorQuintet>,
    pub cov5: DMatrix<f64>,
}

pub fn jackknife_ensemble(
    study: &ReplicateStudy,
    regularizer: Regularizer,
    options: CombinerOptions,
) -> Result<JackknifeEnsemble> {
    let stats = StudyStatistics::new(study, options)?;
    ensemble_from_gram(&stats.gram, regularizer, stats.chao_term())
}

/// Richness is computed once on the full study and reused for every
/// deletion.
pub(crate) fn ensemble_from_gram(
    gram: &Gram,
    regularizer: Regularizer,
    chao: Option<f64>,
) -> Result<JackknifeEnsemble> {
    let n = gram.n();
    if n < MIN_MIXTURE_REPLICATES {
        return Err(Error::TooFewReplicates {
            needed: MIN_MIXTURE_REPLICATES,
            got: n,
        });
    }
    let full = quintet_from_gram(gram, regularizer, chao)?;
    let leave_one_out = (0..n)
        .map(|i| quintet_from_gram(&gram.without(i), regularizer, chao))
        .collect::<Result<Vec<_>>>()?;
    let cov5 = jackknife_covariance(&leave_one_out);
    Ok(JackknifeEnsemble {
        full,
        leave_one_out,
        cov5,
    })
}

fn jackknife_covariance(loo: &[EstimatorQuintet]) -> DMatrix<f64> {
    let n = loo.len() as f64;
    let mut mean = [0.0; 5];
    for q in loo {
        for (m, v) in mean.iter_mut().zip(q.values()) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::zeros(5, 5);
    for q in loo {
        let d: Vec<f64> = q.values().iter().zip(&mean).map(|(v, m)| v - m).collect();
        for a in 0..5 {
            for b in a..5 {
                cov[(a, b)] += d[a] * d[b];
            }
        }
    }
    let scale = (n - 1.0) / n;
    for a in 0..5 {
        for b in a..5 {
            cov[(a, b)] *= scale;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov
}

/// Delete-one jackknife bias correction `n·full − (n−1)·mean(loo)`, with
/// `n = loo.len()`.
pub fn bias_correct(full: f64, loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / n;
    // Same value, written so that equal inputs return `full` exactly.
    full + (n - 1.0) * (full - mean)
}

/// Final mixture for one regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureResult {
    pub regularizer: Regularizer,
    /// Unclipped final estimate.
    pub estimate: f64,
    /// The combined vector: the quintet after bias correction of every slot
    /// but `θ̂*`.
    pub components: [f64; 5],
    pub ensemble: Option<JackknifeEnsemble>,
    pub weights: Option<Vec<f64>>,
    pub status: EstimateStatus,
    /// Human-readable causes for every fallback or loaded solve.
    pub flags: Vec<String>,
}

/// The final clonality estimate for one regularizer.
pub fn inter_clonality(
    study: &ReplicateStudy,
    regularizer: Regularizer,
    options: CombinerOptions,
) -> Result<MixtureResult> {
    mixture(&StudyStatistics::new(study, options)?, regularizer)
}

/// [`inter_clonality`] on precomputed study statistics.
pub fn mixture(stats: &StudyStatistics, regularizer: Regularizer) -> Result<MixtureResult> {
    let n = stats.gram.n();
    let chao = stats.chao_term();
    let mut flags = Vec::new();
    if n < MIN_MIXTURE_REPLICATES {
        let full = quintet_from_gram(&stats.gram, regularizer, chao)?;
        if full.reduced {
            flags.push(format!(
                "quintet: {n} replicates (< {MIN_QUINTET_REPLICATES}), every estimator is theta_star"
            ));
        }
        flags.push(format!(
            "final: {n} replicates (< {MIN_MIXTURE_REPLICATES}), fell back to theta_star"
        ));
        return Ok(MixtureResult {
            regularizer,
            estimate: stats.theta_star,
            components: full.values(),
            ensemble: None,
            weights: None,
            status: EstimateStatus::FallbackThetaStar,
            flags,
        });
    }

    let ensemble = ensemble_from_gram(&stats.gram, regularizer, chao)?;
    for (name, status) in QUINTET_NAMES.iter().zip(ensemble.full.status) {
        match status {
            EstimateStatus::Direct => {}
            EstimateStatus::Loaded => flags.push(format!(
                "{name}: singular pair covariance, solved with diagonal loading"
            )),
            EstimateStatus::FallbackThetaStar => {
                flags.push(format!("{name}: unusable pair covariance, fell back to theta_star"))
            }
        }
    }

    let full = ensemble.full.values();
    let mut components = full;
    if stats.options.bias_correction {
        for slot in [0, 2, 3, 4] {
            let loo: Vec<f64> = ensemble.leave_one_out.iter().map(|q| q.values()[slot]).collect();
            components[slot] = bias_correct(full[slot], &loo);
        }
    }

    let (estimate, weights, status) = match robust_blue(&components, &ensemble.cov5) {
        Ok(fit) => {
            let status = EstimateStatus::from(fit.status);
            if status == EstimateStatus::Loaded {
                flags.push("final: singular jackknife covariance, solved with diagonal loading".into());
            }
            (fit.estimate, Some(fit.weights), status)
        }
        Err(Error::SingularCovariance) => {
            flags.push("final: unusable jackknife covariance, fell back to theta_star".into());
            (stats.theta_star, None, EstimateStatus::FallbackThetaStar)
        }
        Err(e) => return Err(e),
    };

    Ok(MixtureResult {
        regularizer,
        estimate,
        components,
        ensemble: Some(ensemble),
        weights,
        status,
        flags,
    })
}
