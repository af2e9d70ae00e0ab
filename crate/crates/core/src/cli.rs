//! Command-line interface: `estimate`, `simulate` and `benchmark`.
//!
//! Exit codes: 0 on success, 2 on usage errors (including inconsistent
//! flags), 1 on data and I/O errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::combiner::CombinerOptions;
use crate::covariance::{build_sigma0, build_t, mix, regularize_replicate_cov, Regularizer, TMatrixKind};
use crate::estimators::{chao_richness, pairwise_theta, theta_star};
use crate::io::{parse_replicates, write_labeled_matrix, write_tsv_dir, InputFormat, Truth};
use crate::model::ReplicateStudy;
use crate::report::{build_report, to_json_string, write_json, write_report, ClonalityReport, FORMAT_VERSION};
use crate::simulator::{
    run_experiment, simulate_study, ExperimentConfig, PopulationModel, PopulationSpec, ReplicateMode, ReplicateSpec,
    SeedStreams,
};
use crate::{Error, Result};

/// Seed used when `--seed` is omitted; always echoed to stderr.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "clonality",
    version,
    about = "Clonality estimation from replicate sequencing libraries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate clonality from replicate count files.
    Estimate(EstimateArgs),
    /// Simulate a population and replicate libraries.
    Simulate(SimulateArgs),
    /// Monte-Carlo comparison of all estimators.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegularizerArg {
    Hard,
    Soft,
    Shrink,
    All,
}

impl RegularizerArg {
    fn expand(self) -> Vec<Regularizer> {
        match self {
            RegularizerArg::Hard => vec![Regularizer::Hard],
            RegularizerArg::Soft => vec![Regularizer::Soft],
            RegularizerArg::Shrink => vec![Regularizer::Shrink],
            RegularizerArg::All => Regularizer::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    TsvDir,
    MatrixTsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Zipf,
    Pareto,
}

#[derive(Debug, Args)]
struct CorrectionArgs {
    /// Do not subtract the inverse squared richness from the common level.
    #[arg(long)]
    no_chao_correction: bool,
    /// Combine the raw quintet instead of the jackknife bias-corrected one.
    #[arg(long)]
    no_bias_correction: bool,
}

impl CorrectionArgs {
    fn options(&self) -> CombinerOptions {
        CombinerOptions {
            chao_correction: !self.no_chao_correction,
            bias_correction: !self.no_bias_correction,
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Directory of per-replicate TSV files, or a count-matrix TSV.
    #[arg(long)]
    input: PathBuf,
    /// Input layout; defaults to tsv-dir for directories, matrix-tsv otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "all")]
    regularizer: RegularizerArg,
    #[command(flatten)]
    corrections: CorrectionArgs,
    /// Report path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the intermediate covariance matrices as TSV into this directory.
    #[arg(long)]
    dump_matrices: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PopulationArgs {
    #[arg(long, value_enum, default_value = "pareto")]
    model: ModelArg,
    /// Number of clones C.
    #[arg(long)]
    clones: Option<usize>,
    /// Zipf exponent r in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    zipf_r: f64,
    #[arg(long, default_value_t = 1.0)]
    pareto_shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pareto_location: f64,
    /// Number of replicates; 1000 cells each unless --cells is given.
    #[arg(long)]
    replicates: Option<usize>,
    /// Cells per replicate, comma separated. Default: 1000 x6, 10000 x2.
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<u64>>,
    /// Scale each replicate's depth by its own Pareto draw.
    #[arg(long)]
    depth_jitter: bool,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl PopulationArgs {
    fn population(&self, default_clones: usize) -> PopulationSpec {
        let clones = self.clones.unwrap_or(default_clones);
        let model = match self.model {
            ModelArg::Zipf => PopulationModel::Zipf { r: self.zipf_r },
            ModelArg::Pareto => PopulationModel::Pareto {
                shape: self.pareto_shape,
                location: self.pareto_location,
            },
        };
        PopulationSpec { model, clones }
    }

    fn replicate_spec(&self) -> std::result::Result<ReplicateSpec, String> {
        let cells = match (&self.cells, self.replicates) {
            (Some(c), Some(n)) if c.len() != n => {
                return Err(format!("--cells lists {} values but --replicates is {n}", c.len()))
            }
            (Some(c), _) => c.clone(),
            (None, Some(n)) => vec![1000; n],
            (None, None) => ReplicateSpec::default_profile().cell_counts,
        };
        let mode = if self.depth_jitter {
            ReplicateMode::DepthJitter {
                shape: self.pareto_shape,
                location: self.pareto_location,
            }
        } else {
            ReplicateMode::PerClone
        };
        Ok(ReplicateSpec {
            cell_counts: cells,
            mode,
        })
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            eprintln!("clonality: no --seed given, using {DEFAULT_SEED}");
            DEFAULT_SEED
        })
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: PopulationArgs,
    /// Output directory for replicate TSVs and truth.json.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    sim: PopulationArgs,
    /// Number of runs. Default 200, or 1000 with --full-scale.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_enum, default_value = "all")]
    regularizer: RegularizerArg,
    #[command(flatten)]
    corrections: CorrectionArgs,
    /// Per-run CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path; stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// 200,000 clones instead of 20,000.
    #[arg(long)]
    full_scale: bool,
    /// Run on one thread.
    #[arg(long)]
    serial: bool,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn estimate(a: EstimateArgs) -> std::result::Result<(), Failure> {
    let format = match a.format {
        Some(FormatArg::TsvDir) => InputFormat::TsvDir,
        Some(FormatArg::MatrixTsv) => InputFormat::MatrixTsv,
        None if a.input.is_dir() => InputFormat::TsvDir,
        None => InputFormat::MatrixTsv,
    };
    let study = parse_replicates(&a.input, format)?;
    let regularizers = a.regularizer.expand();
    let options = a.corrections.options();
    let report = build_report(
        &study,
        &regularizers,
        options,
        Some((a.input.display().to_string(), format)),
    )?;
    if let Some(dir) = &a.dump_matrices {
        dump_matrices(&study, &report, dir)?;
    }
    match &a.output {
        Some(path) => write_report(&report, path)?,
        None => print!("{}", to_json_string(&report)?),
    }
    Ok(())
}

/// Replicate covariance, `Σ̂⁽⁰⁾`, the three mixtures and `cov5` for every
/// regularizer in the report.
fn dump_matrices(study: &ReplicateStudy, report: &ClonalityReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let table = pairwise_theta(study);
    let ts = theta_star(&table)?;
    let chao = report.config.options.chao_correction.then(|| chao_richness(study));
    let names: Vec<String> = study.replicates().iter().map(|r| r.name().to_string()).collect();
    let labels = table.pairs.labels();
    for (&reg, r) in &report.per_regularizer {
        let rc = regularize_replicate_cov(study, ts, chao, reg);
        write_labeled_matrix(&dir.join(format!("{reg}_replicate_cov.tsv")), &names, &rc.matrix)?;
        if study.n() >= 3 {
            let profile = rc.induced_profile();
            let sigma0 = build_sigma0(&profile, study.n())?;
            write_labeled_matrix(&dir.join(format!("{reg}_sigma0.tsv")), &labels, &sigma0.matrix)?;
            for (i, kind) in [TMatrixKind::T1, TMatrixKind::T2, TMatrixKind::T3]
                .into_iter()
                .enumerate()
            {
                let m = mix(&sigma0, &build_t(kind, &sigma0, &profile));
                write_labeled_matrix(&dir.join(format!("{reg}_sigma{}.tsv", i + 1)), &labels, &m.matrix)?;
            }
        }
        if let Some(cov5) = &r.cov5 {
            let m = nalgebra::DMatrix::from_fn(5, 5, |i, j| cov5[i][j]);
            let q: Vec<String> = crate::combiner::QUINTET_NAMES.iter().map(|s| s.to_string()).collect();
            write_labeled_matrix(&dir.join(format!("{reg}_cov5.tsv")), &q, &m)?;
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> std::result::Result<(), Failure> {
    let population = a.sim.population(20_000);
    let replicates = a.sim.replicate_spec().map_err(Failure::Usage)?;
    population.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    replicates.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let seed = a.sim.seed();
    let (p, study) = simulate_study(&population, &replicates, SeedStreams::new(seed), 0)?;
    write_tsv_dir(&study, &a.output)?;
    let truth = Truth {
        format_version: FORMAT_VERSION.to_string(),
        theta: p.squared_norm(),
        clones: p.support_size(),
        seed,
        population,
        replicates,
        frequencies: p.iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    write_json(&truth, &a.output.join("truth.json"))?;
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> std::result::Result<(), Failure> {
    let seed = a.sim.seed();
    let base = if a.full_scale {
        ExperimentConfig::full_scale(seed)
    } else {
        ExperimentConfig::desk_scale(seed)
    };
    let config = ExperimentConfig {
        population: a.sim.population(base.population.clones),
        replicates: a.sim.replicate_spec().map_err(Failure::Usage)?,
        runs: a.runs.unwrap_or(base.runs),
        regularizers: a.regularizer.expand(),
        seed,
        options: a.corrections.options(),
        parallel: !a.serial,
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let result = run_experiment(&config)?;
    if let Some(path) = &a.csv {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        result.write_csv(file)?;
    }
    let summary = result.summary();
    match &a.summary {
        Some(path) => write_json(&summary, path)?,
        None => print!("{}", to_json_string(&summary)?),
    }
    for f in &result.failures {
        eprintln!("clonality: run {} failed: {}", f.run, f.message);
    }
    Ok(())
}
