//! Monte-Carlo comparison of every estimator against the true `θ`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_population, simulate_replicates, PopulationSpec, ReplicateSpec, SeedStreams};
use crate::combiner::{mixture, CombinerOptions, StudyStatistics};
use crate::covariance::{min_eigenvalue, EstimateStatus, Regularizer};
use crate::model::CloneFrequencyVector;
use crate::{Error, Result};

/// Component estimators reported per regularizer, with their quintet slot.
const COMPONENTS: [(&str, usize); 4] = [("theta0", 0), ("theta1", 2), ("theta2", 3), ("theta3", 4)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub population: PopulationSpec,
    pub replicates: ReplicateSpec,
    pub runs: usize,
    pub regularizers: Vec<Regularizer>,
    pub seed: u64,
    pub options: CombinerOptions,
    /// Run on the rayon pool. Results do not depend on it.
    #[serde(skip)]
    pub parallel: bool,
}

impl ExperimentConfig {
    /// Pareto population of 20,000 clones, the eight-replicate profile, 200
    /// runs, every regularizer.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            population: PopulationSpec::pareto(20_000),
            replicates: ReplicateSpec::default_profile(),
            runs: 200,
            regularizers: Regularizer::ALL.to_vec(),
            seed,
            options: CombinerOptions::default(),
            parallel: true,
        }
    }

    /// As [`desk_scale`](Self::desk_scale) with 200,000 clones and 1,000 runs.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            population: PopulationSpec::pareto(200_000),
            runs: 1000,
            ..Self::desk_scale(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidSpec("runs must be at least 1".into()));
        }
        self.population.validate()?;
        self.replicates.validate()
    }

    /// Estimator names in row order, each with its regularizer (if any).
    pub fn estimators(&self) -> Vec<(&'static str, Option<Regularizer>)> {
        let mut out = vec![("naive", None), ("theta_star", None)];
        for &reg in &self.regularizers {
            out.extend(COMPONENTS.iter().map(|&(name, _)| (name, Some(reg))));
            out.push(("final", Some(reg)));
        }
        out
    }
}

/// Table key of an estimator: `naive`, `theta_star`, `final/hard`, ...
pub fn estimator_key(name: &str, regularizer: Option<Regularizer>) -> String {
    match regularizer {
        Some(r) => format!("{name}/{r}"),
        None => name.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimator: String,
    pub regularizer: Option<Regularizer>,
    /// Clipped to `[0, 1]`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDiagnostics {
    pub regularizer: Regularizer,
    pub cov5_min_eigenvalue: Option<f64>,
    pub status: EstimateStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub true_theta: f64,
    pub estimates: Vec<Estimate>,
    pub diagnostics: Vec<MixtureDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub config: ExperimentConfig,
    pub per_run: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    /// Mean squared error over completed runs, by [`estimator_key`].
    pub mse: BTreeMap<String, f64>,
    /// `mse / mse["theta_star"]`.
    pub ratio: BTreeMap<String, f64>,
}

/// JSON summary of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub format_version: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub runs_completed: usize,
    pub failures: Vec<RunFailure>,
    pub mse: BTreeMap<String, f64>,
    pub ratio: BTreeMap<String, f64>,
    /// Mean of `estimate − θ` over completed runs.
    pub bias: BTreeMap<String, f64>,
    /// Smallest jackknife-covariance eigenvalue seen, per regularizer.
    pub cov5_min_eigenvalue: BTreeMap<String, f64>,
    /// Runs whose final mixture needed diagonal loading, per regularizer.
    pub cov5_loaded_runs: BTreeMap<String, usize>,
    /// Runs whose final mixture fell back to `θ̂*`, per regularizer.
    pub final_fallback_runs: BTreeMap<String, usize>,
}

/// Runs the experiment. Individual failed runs are recorded in
/// [`BenchmarkResult::failures`]; only an invalid configuration is an error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<BenchmarkResult> {
    config.validate()?;
    let streams = SeedStreams::new(config.seed);
    let fixed = if config.population.is_fixed() {
        Some(sample_population(&config.population, &mut streams.population(0))?)
    } else {
        None
    };
    let one = |run: usize| {
        run_once(config, streams, fixed.as_ref(), run).map_err(|e| RunFailure {
            run,
            message: e.to_string(),
        })
    };
    let outcomes: Vec<std::result::Result<RunRecord, RunFailure>> = if config.parallel {
        (0..config.runs).into_par_iter().map(one).collect()
    } else {
        (0..config.runs).map(one).collect()
    };

    let mut per_run = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => per_run.push(r),
            Err(f) => failures.push(f),
        }
    }

    let mut mse = BTreeMap::new();
    if !per_run.is_empty() {
        for (name, reg) in config.estimators() {
            let key = estimator_key(name, reg);
            let sum: f64 = per_run
                .iter()
                .map(|r| {
                    let e = r.value(name, reg).expect("every run reports every estimator");
                    (e - r.true_theta).powi(2)
                })
                .sum();
            mse.insert(key, sum / per_run.len() as f64);
        }
    }
    let ratio = match mse.get("theta_star") {
        Some(&base) if base > 0.0 => mse.iter().map(|(k, v)| (k.clone(), v / base)).collect(),
        _ => BTreeMap::new(),
    };

    Ok(BenchmarkResult {
        config: config.clone(),
        per_run,
        failures,
        mse,
        ratio,
    })
}

fn run_once(
    config: &ExperimentConfig,
    streams: SeedStreams,
    fixed: Option<&CloneFrequencyVector>,
    run: usize,
) -> Result<RunRecord> {
    let fresh;
    let p = match fixed {
        Some(p) => p,
        None => {
            fresh = sample_population(&config.population, &mut streams.population(run as u64))?;
            &fresh
        }
    };
    let study = simulate_replicates(p, &config.replicates, streams, run as u64)?;
    let stats = StudyStatistics::new(&study, config.options)?;

    let mut estimates = vec![
        Estimate::new("naive", None, stats.naive),
        Estimate::new("theta_star", None, stats.theta_star),
    ];
    let mut diagnostics = Vec::new();
    for &reg in &config.regularizers {
        let m = mixture(&stats, reg)?;
        for (name, slot) in COMPONENTS {
            estimates.push(Estimate::new(name, Some(reg), m.components[slot]));
        }
        estimates.push(Estimate::new("final", Some(reg), m.estimate));
        diagnostics.push(MixtureDiagnostics {
            regularizer: reg,
            cov5_min_eigenvalue: m.ensemble.as_ref().map(|e| min_eigenvalue(&e.cov5)),
            status: m.status,
        });
    }
    Ok(RunRecord {
        run,
        true_theta: p.squared_norm(),
        estimates,
        diagnostics,
    })
}

impl Estimate {
    fn new(estimator: &str, regularizer: Option<Regularizer>, value: f64) -> Self {
        Self {
            estimator: estimator.to_string(),
            regularizer,
            value: value.clamp(0.0, 1.0),
        }
    }
}

impl RunRecord {
    pub fn value(&self, estimator: &str, regularizer: Option<Regularizer>) -> Option<f64> {
        self.estimates
            .iter()
            .find(|e| e.estimator == estimator && e.regularizer == regularizer)
            .map(|e| e.value)
    }
}

impl BenchmarkResult {
    /// Values of one estimator over completed runs, in run order.
    pub fn series(&self, estimator: &str, regularizer: Option<Regularizer>) -> Vec<f64> {
        self.per_run
            .iter()
            .filter_map(|r| r.value(estimator, regularizer))
            .collect()
    }

    /// Final-mixture regularizer with the smallest MSE.
    pub fn best_regularizer(&self) -> Option<Regularizer> {
        self.config
            .regularizers
            .iter()
            .copied()
            .filter_map(|r| self.mse.get(&estimator_key("final", Some(r))).map(|&m| (r, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(r, _)| r)
    }

    /// One row per run per estimator:
    /// `run,estimator,regularizer,true_theta,estimate,sq_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "run,estimator,regularizer,true_theta,estimate,sq_error")?;
        for r in &self.per_run {
            for e in &r.estimates {
                let reg = e.regularizer.map_or("none", Regularizer::name);
                let err = (e.value - r.true_theta).powi(2);
                writeln!(
                    out,
                    "{},{},{},{:.16e},{:.16e},{:.16e}",
                    r.run, e.estimator, reg, r.true_theta, e.value, err
                )?;
            }
        }
        out.flush()
    }

    pub fn summary(&self) -> BenchmarkSummary {
        let n = self.per_run.len() as f64;
        let mut bias = BTreeMap::new();
        if n > 0.0 {
            for (name, reg) in self.config.estimators() {
                let sum: f64 = self
                    .per_run
                    .iter()
                    .filter_map(|r| r.value(name, reg).map(|v| v - r.true_theta))
                    .sum();
                bias.insert(estimator_key(name, reg), sum / n);
            }
        }
        let mut cov5_min_eigenvalue = BTreeMap::new();
        let mut cov5_loaded_runs = BTreeMap::new();
        let mut final_fallback_runs = BTreeMap::new();
        for &reg in &self.config.regularizers {
            let diags: Vec<&MixtureDiagnostics> = self
                .per_run
                .iter()
                .flat_map(|r| r.diagnostics.iter().filter(move |d| d.regularizer == reg))
                .collect();
            let min = diags
                .iter()
                .filter_map(|d| d.cov5_min_eigenvalue)
                .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
            if let Some(min) = min {
                cov5_min_eigenvalue.insert(reg.to_string(), min);
            }
            let count = |s| diags.iter().filter(|d| d.status == s).count();
            cov5_loaded_runs.insert(reg.to_string(), count(EstimateStatus::Loaded));
            final_fallback_runs.insert(reg.to_string(), count(EstimateStatus::FallbackThetaStar));
        }
        BenchmarkSummary {
            format_version: crate::report::FORMAT_VERSION.to_string(),
            master_seed: self.config.seed,
            config: self.config.clone(),
            runs_completed: self.per_run.len(),
            failures: self.failures.clone(),
            mse: self.mse.clone(),
            ratio: self.ratio.clone(),
            bias,
            cov5_min_eigenvalue,
            cov5_loaded_runs,
            final_fallback_runs,
        }
    }
}
