//! Clonality estimation from replicate sequencing libraries.
//!
//! Clonality is the squared Euclidean norm `θ = Σ_j p(j)²` of the clone
//! frequency vector `p` of a population: the probability that two members
//! drawn independently belong to the same clone. Only noisy replicate
//! libraries `p_i = p + ε_i` are observed.
//!
//! The crate provides:
//!
//! - [`model`]: replicate data model (sparse counts, aligned studies).
//! - [`estimators`]: cross-replicate pairwise products, the weighted
//!   baseline `θ̂*`, per-replicate error-norm profiles, and incidence-based
//!   Chao richness.
//! - [`covariance`]: the pair-covariance model, its stabilized variants, the
//!   regularized replicate covariances, and the best linear unbiased combiner.
//! - [`combiner`]: the five-estimator quintet, delete-one-replicate jackknife,
//!   bias correction, and the final mixture.
//! - [`simulator`]: Zipf and Pareto populations, the Poisson replicate
//!   machine, and the seeded Monte-Carlo benchmark harness.
//! - [`io`], [`report`], [`cli`]: file formats and the command line.
//!
//! ```
//! use std::collections::BTreeMap;
//! use clonality::model::ReplicateStudy;
//! use clonality::estimators::{pairwise_theta, theta_star};
//!
//! let reps: Vec<BTreeMap<String, u64>> = vec![
//!     [("a".to_string(), 2), ("b".to_string(), 2)].into_iter().collect(),
//!     [("a".to_string(), 1), ("c".to_string(), 3)].into_iter().collect(),
//! ];
//! let study = ReplicateStudy::from_counts(reps).unwrap();
//! let table = pairwise_theta(&study);
//! assert_eq!(theta_star(&table).unwrap(), 0.125);
//! ```

#![forbid(unsafe_code)]

use std::path::PathBuf;

use thiserror::Error;

pub mod cli;
pub mod combiner;
pub mod covariance;
pub mod estimators;
pub mod io;
pub mod model;
pub mod report;
pub mod simulator;

pub use combiner::{inter_clonality, CombinerOptions, EstimatorQuintet, MixtureResult};
pub use covariance::Regularizer;
pub use model::{CloneFrequencyVector, ReplicateObservation, ReplicateStudy};

/// Errors raised by estimation, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("replicate {replicate:?} has zero total reads")]
    EmptyReplicate { replicate: String },

    #[error("need at least {needed} replicates, got {got}")]
    TooFewReplicates { needed: usize, got: usize },

    #[error("all pair weights are zero")]
    DegenerateWeights,

    #[error("covariance matrix is singular or numerically ill-conditioned")]
    SingularCovariance,

    #[error("replicate draw produced zero reads after {retries} retries")]
    DegenerateDraw { retries: usize },

    #[error("invalid frequency vector: {0}")]
    InvalidFrequencies(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("{}:{line}: malformed line: {reason}", file.display())]
    MalformedLine { file: PathBuf, line: usize, reason: String },

    #[error("{}:{line}: negative count", file.display())]
    NegativeCount { file: PathBuf, line: usize },

    #[error("{}:{line}: duplicate clone id {id:?}", file.display())]
    DuplicateCloneId { file: PathBuf, line: usize, id: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
