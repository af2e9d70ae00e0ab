//! Synthetic populations and replicate libraries.
//!
//! Populations are either a truncated Zipf law `p(j) ∝ j^{−r}`, `j = 1..C`
//! (deterministic), or normalized i.i.d. Pareto abundances (random). A
//! replicate with `m` cells draws `count_j ~ Poisson(m · p(j))`
//! independently per clone, so clones outside the support of `p` are never
//! observed.
//!
//! # Seeding
//!
//! All randomness comes from ChaCha20 streams derived from one master seed:
//! the generator is seeded with `seed_from_u64(master)` and switched to
//! stream `(run << 16) | slot`, where slot `0` is the population and slot
//! `1 + i` is replicate `i`. Every run and replicate therefore has its own
//! stream, and parallel and serial execution draw identical numbers.

pub mod benchmark;
pub mod poisson;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use crate::model::{CloneFrequencyVector, ReplicateObservation, ReplicateStudy};
use crate::{Error, Result};

pub use benchmark::{run_experiment, BenchmarkResult, ExperimentConfig};

/// Redraws allowed for a replicate that came out with zero reads.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum PopulationModel {
    /// `p(j) ∝ j^{−r}`, `r ∈ [0, 1]`.
    Zipf { r: f64 },
    /// `p ∝ w`, `w_j ~ Pareto(location, shape)` i.i.d.
    Pareto { shape: f64, location: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(flatten)]
    pub model: PopulationModel,
    pub clones: usize,
}

impl PopulationSpec {
    pub fn zipf(r: f64, clones: usize) -> Self {
        Self {
            model: PopulationModel::Zipf { r },
            clones,
        }
    }

    /// Pareto abundances with location and shape 1.
    pub fn pareto(clones: usize) -> Self {
        Self {
            model: PopulationModel::Pareto {
                shape: 1.0,
                location: 1.0,
            },
            clones,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clones < 3 {
            return Err(Error::InvalidSpec(format!(
                "population needs at least 3 clones, got {}",
                self.clones
            )));
        }
        match self.model {
            PopulationModel::Zipf { r } if !(0.0..=1.0).contains(&r) => {
                Err(Error::InvalidSpec(format!("zipf exponent {r} outside [0, 1]")))
            }
            PopulationModel::Pareto { shape, location }
                if !(shape > 0.0 && location > 0.0 && shape.is_finite() && location.is_finite()) =>
            {
                Err(Error::InvalidSpec(format!(
                    "pareto shape {shape} and location {location} must be positive"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Zipf populations do not depend on the seed.
    pub fn is_fixed(&self) -> bool {
        matches!(self.model, PopulationModel::Zipf { .. })
    }
}

/// How replicate depths are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ReplicateMode {
    /// `count_j ~ Poisson(cells · p(j))`.
    #[default]
    PerClone,
    /// Each replicate first draws `P_i ~ Pareto(location, shape)` and uses
    /// `count_j ~ Poisson(cells · P_i · p(j))`: heavy-tailed depth jitter.
    DepthJitter { shape: f64, location: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSpec {
    pub cell_counts: Vec<u64>,
    #[serde(default)]
    pub mode: ReplicateMode,
}

impl ReplicateSpec {
    pub fn new(cell_counts: Vec<u64>) -> Self {
        Self {
            cell_counts,
            mode: ReplicateMode::PerClone,
        }
    }

    /// Eight replicates: six of 1,000 cells and two of 10,000.
    pub fn default_profile() -> Self {
        Self::new(vec![1000, 1000, 1000, 1000, 1000, 1000, 10_000, 10_000])
    }

    pub fn n(&self) -> usize {
        self.cell_counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 replicates, got {}",
                self.n()
            )));
        }
        if self.n() >= 1 << 16 {
            return Err(Error::InvalidSpec("too many replicates".into()));
        }
        if self.cell_counts.contains(&0) {
            return Err(Error::InvalidSpec("cell counts must be positive".into()));
        }
        if let ReplicateMode::DepthJitter { shape, location } = self.mode {
            if !(shape > 0.0 && location > 0.0) {
                return Err(Error::InvalidSpec("jitter shape and location must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-run and per-replicate random streams under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    pub master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    fn stream(&self, run: u64, slot: u64) -> ChaCha20Rng {
        assert!(run < 1 << 48, "run index {run} out of range");
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream((run << 16) | slot);
        rng
    }

    pub fn population(&self, run: u64) -> ChaCha20Rng {
        self.stream(run, 0)
    }

    pub fn replicate(&self, run: u64, index: usize) -> ChaCha20Rng {
        self.stream(run, 1 + index as u64)
    }
}

/// Zero-padded clone id: `c001 … c100` for 100 clones.
pub fn clone_id(j: usize, clones: usize) -> String {
    let width = clones.to_string().len();
    format!("c{j:0width$}")
}

/// Zero-padded replicate name, sorting in index order: `rep01 … rep08`.
pub fn replicate_name(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("rep{:0width$}", i + 1)
}

/// Draws a population. Zipf ignores `rng`.
pub fn sample_population<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<CloneFrequencyVector> {
    spec.validate()?;
    let c = spec.clones;
    let weights: Vec<f64> = match spec.model {
        PopulationModel::Zipf { r } => (1..=c).map(|j| (j as f64).powf(-r)).collect(),
        PopulationModel::Pareto { shape, location } => {
            let dist = Pareto::new(location, shape).map_err(|e| Error::InvalidSpec(format!("pareto: {e}")))?;
            (0..c).map(|_| dist.sample(rng)).collect()
        }
    };
    let p = CloneFrequencyVector::from_weights(weights.into_iter().enumerate().map(|(j, w)| (clone_id(j + 1, c), w)))?;
    p.validate_population()?;
    Ok(p)
}

/// One replicate library of `cells` cells drawn from `p`.
pub fn sample_replicate<R: Rng + ?Sized>(
    p: &CloneFrequencyVector,
    cells: u64,
    name: &str,
    rng: &mut R,
) -> Result<ReplicateObservation> {
    sample_replicate_with(p, cells, ReplicateMode::PerClone, name, rng)
}

pub fn sample_replicate_with<R: Rng + ?Sized>(
    p: &CloneFrequencyVector,
    cells: u64,
    mode: ReplicateMode,
    name: &str,
    rng: &mut R,
) -> Result<ReplicateObservation> {
    let depth = match mode {
        ReplicateMode::PerClone => cells as f64,
        ReplicateMode::DepthJitter { shape, location } => {
            let dist = Pareto::new(location, shape).map_err(|e| Error::InvalidSpec(format!("pareto: {e}")))?;
            cells as f64 * dist.sample(rng)
        }
    };
    for _ in 0..=MAX_REDRAWS {
        let counts: Vec<(String, u64)> = p
            .iter()
            .filter_map(|(id, f)| {
                let k = poisson::sample(rng, depth * f);
                (k > 0).then(|| (id.to_string(), k))
            })
            .collect();
        if !counts.is_empty() {
            return ReplicateObservation::new(name, counts);
        }
    }
    Err(Error::DegenerateDraw { retries: MAX_REDRAWS })
}

/// Population (fresh for Pareto, fixed for Zipf) and its replicates for one
/// run, drawn from the run's streams.
pub fn simulate_study(
    population: &PopulationSpec,
    replicates: &ReplicateSpec,
    streams: SeedStreams,
    run: u64,
) -> Result<(CloneFrequencyVector, ReplicateStudy)> {
    let p = sample_population(population, &mut streams.population(run))?;
    let study = simulate_replicates(&p, replicates, streams, run)?;
    Ok((p, study))
}

/// Replicates of a given population for one run.
pub fn simulate_replicates(
    p: &CloneFrequencyVector,
    replicates: &ReplicateSpec,
    streams: SeedStreams,
    run: u64,
) -> Result<ReplicateStudy> {
    replicates.validate()?;
    let n = replicates.n();
    let reps = replicates
        .cell_counts
        .iter()
        .enumerate()
        .map(|(i, &cells)| {
            sample_replicate_with(
                p,
                cells,
                replicates.mode,
                &replicate_name(i, n),
                &mut streams.replicate(run, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    ReplicateStudy::new(reps)
}
