//! The JSON estimation report.
//!
//! Keys appear in a fixed order (struct field order, sorted maps) and every
//! real is written with 17 significant digits, so a report parses back to
//! the same bits and identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::combiner::{mixture, CombinerOptions, MixtureResult, StudyStatistics};
use crate::covariance::{regularize_gram, EstimateStatus, Regularizer};
use crate::io::InputFormat;
use crate::model::ReplicateStudy;
use crate::Result;

pub const FORMAT_VERSION: &str = "1";

/// Regularizer whose final estimate is the report's headline value when
/// several are computed.
pub const PRIMARY_REGULARIZER: Regularizer = Regularizer::Soft;

/// One value per quintet slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quintet<T> {
    pub theta0: T,
    pub theta_star: T,
    pub theta1: T,
    pub theta2: T,
    pub theta3: T,
}

impl<T: Copy> From<[T; 5]> for Quintet<T> {
    fn from(v: [T; 5]) -> Self {
        Self {
            theta0: v[0],
            theta_star: v[1],
            theta1: v[2],
            theta2: v[3],
            theta3: v[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerReport {
    /// Full-data quintet, unclipped.
    pub quintet: Quintet<f64>,
    pub quintet_status: Quintet<EstimateStatus>,
    /// The vector actually combined (bias-corrected unless disabled).
    pub components: Quintet<f64>,
    /// Jackknife covariance of the quintet, row-major.
    pub cov5: Option<Vec<Vec<f64>>>,
    pub weights: Option<Vec<f64>>,
    /// Clipped to `[0, 1]`.
    #[serde(rename = "final")]
    pub final_estimate: f64,
    pub final_unclipped: f64,
    pub final_status: EstimateStatus,
    /// Common covariance level `b`.
    pub level: f64,
    pub shrinkage_intensity: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub input: Option<String>,
    pub format: Option<InputFormat>,
    pub regularizers: Vec<Regularizer>,
    pub primary_regularizer: Regularizer,
    pub options: CombinerOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClonalityReport {
    pub format_version: String,
    /// Final estimate of the primary regularizer, clipped to `[0, 1]`.
    #[serde(rename = "final")]
    pub final_estimate: f64,
    pub theta_star: f64,
    pub naive: f64,
    pub chao: f64,
    pub n: usize,
    pub replicates: Vec<String>,
    pub distinct_clones: Vec<usize>,
    pub total_reads: Vec<u64>,
    pub per_regularizer: BTreeMap<Regularizer, RegularizerReport>,
    /// Flags of the primary regularizer.
    pub flags: Vec<String>,
    pub config: ReportConfig,
}

/// Estimates the study under each regularizer. The primary regularizer is
/// [`PRIMARY_REGULARIZER`] if requested, otherwise the first one given.
pub fn build_report(
    study: &ReplicateStudy,
    regularizers: &[Regularizer],
    options: CombinerOptions,
    input: Option<(String, InputFormat)>,
) -> Result<ClonalityReport> {
    let regularizers: Vec<Regularizer> = if regularizers.is_empty() {
        vec![PRIMARY_REGULARIZER]
    } else {
        regularizers.to_vec()
    };
    let primary = if regularizers.contains(&PRIMARY_REGULARIZER) {
        PRIMARY_REGULARIZER
    } else {
        regularizers[0]
    };
    let stats = StudyStatistics::new(study, options)?;
    let mut per_regularizer = BTreeMap::new();
    for &reg in &regularizers {
        let m = mixture(&stats, reg)?;
        per_regularizer.insert(reg, regularizer_report(&stats, &m));
    }
    let head = &per_regularizer[&primary];
    let (input, format) = input.map_or((None, None), |(i, f)| (Some(i), Some(f)));
    Ok(ClonalityReport {
        format_version: FORMAT_VERSION.to_string(),
        final_estimate: head.final_estimate,
        theta_star: stats.theta_star,
        naive: stats.naive,
        chao: stats.chao,
        n: study.n(),
        replicates: study.replicates().iter().map(|r| r.name().to_string()).collect(),
        distinct_clones: study.distinct_clones(),
        total_reads: study.total_reads(),
        flags: head.flags.clone(),
        per_regularizer,
        config: ReportConfig {
            input,
            format,
            regularizers,
            primary_regularizer: primary,
            options,
        },
    })
}

fn regularizer_report(stats: &StudyStatistics, m: &MixtureResult) -> RegularizerReport {
    let chao = stats.options.chao_correction.then_some(stats.chao);
    let rc = regularize_gram(&stats.gram, stats.theta_star, chao, m.regularizer);
    let (quintet, quintet_status) = match &m.ensemble {
        Some(e) => (e.full.values(), e.full.status),
        None => (m.components, [EstimateStatus::FallbackThetaStar; 5]),
    };
    let cov5 = m.ensemble.as_ref().map(|e| {
        (0..e.cov5.nrows())
            .map(|i| e.cov5.row(i).iter().copied().collect())
            .collect()
    });
    RegularizerReport {
        quintet: quintet.into(),
        quintet_status: quintet_status.into(),
        components: m.components.into(),
        cov5,
        weights: m.weights.clone(),
        final_estimate: m.estimate.clamp(0.0, 1.0),
        final_unclipped: m.estimate,
        final_status: m.status,
        level: rc.level,
        shrinkage_intensity: rc.intensity,
        flags: m.flags.clone(),
    }
}

/// Pretty JSON whose reals carry 17 significant digits.
struct ExactFloats(PrettyFormatter<'static>);

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with exact reals and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn write_report(report: &ClonalityReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<ClonalityReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study() -> ReplicateStudy {
        ReplicateStudy::from_counts([
            vec![("a", 30u64), ("b", 12), ("c", 5), ("d", 1)],
            vec![("a", 25), ("b", 15), ("c", 3), ("e", 2)],
            vec![("a", 40), ("b", 9), ("d", 4)],
            vec![("a", 20), ("c", 7), ("e", 1), ("f", 3)],
            vec![("a", 33), ("b", 11), ("c", 6)],
            vec![("a", 28), ("b", 10), ("f", 2), ("g", 1)],
        ])
        .unwrap()
    }

    #[test]
    fn floats_keep_every_bit() {
        let xs = vec![0.1, 1.0 / 3.0, 5e-324, f64::MAX, -0.0, 2.0f64.sqrt()];
        let s = to_json_string(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits(), "{s}");
        }
        assert!(s.contains("3.3333333333333331e-1"));
    }

    #[test]
    fn report_round_trips_exactly() {
        let r = build_report(&study(), &Regularizer::ALL, CombinerOptions::default(), None).unwrap();
        let s = to_json_string(&r).unwrap();
        let back: ClonalityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(to_json_string(&back).unwrap(), s);
    }

    #[test]
    fn report_is_deterministic_and_ordered() {
        let a = to_json_string(&build_report(&study(), &Regularizer::ALL, CombinerOptions::default(), None).unwrap())
            .unwrap();
        let b = to_json_string(&build_report(&study(), &Regularizer::ALL, CombinerOptions::default(), None).unwrap())
            .unwrap();
        assert_eq!(a, b);
        let pos = |k: &str| a.find(k).unwrap();
        assert!(pos("\"format_version\"") < pos("\"final\""));
        assert!(pos("\"hard\"") < pos("\"soft\"") && pos("\"soft\"") < pos("\"shrink\""));
    }

    #[test]
    fn headline_is_primary_and_clipped() {
        let r = build_report(&study(), &Regularizer::ALL, CombinerOptions::default(), None).unwrap();
        assert_eq!(r.config.primary_regularizer, PRIMARY_REGULARIZER);
        assert_eq!(r.final_estimate, r.per_regularizer[&PRIMARY_REGULARIZER].final_estimate);
        assert!((0.0..=1.0).contains(&r.final_estimate));
        let only = build_report(&study(), &[Regularizer::Shrink], CombinerOptions::default(), None).unwrap();
        assert_eq!(only.config.primary_regularizer, Regularizer::Shrink);
        assert!(only.per_regularizer[&Regularizer::Shrink].shrinkage_intensity.is_some());
    }

    #[test]
    fn three_replicates_flag_fallback() {
        let s = ReplicateStudy::from_counts([
            vec![("a", 3u64), ("b", 1)],
            vec![("a", 2), ("c", 2)],
            vec![("a", 1), ("b", 1)],
        ])
        .unwrap();
        let r = build_report(&s, &[Regularizer::Hard], CombinerOptions::default(), None).unwrap();
        assert_eq!(r.final_estimate, r.theta_star);
        assert!(r.flags.iter().any(|f| f.contains("fell back to theta_star")));
        assert!(r.per_regularizer[&Regularizer::Hard].cov5.is_none());
    }

    #[test]
    fn missing_directory_is_io_error() {
        let r = build_report(&study(), &[Regularizer::Hard], CombinerOptions::default(), None).unwrap();
        assert!(matches!(
            write_report(&r, Path::new("/nonexistent/dir/report.json")),
            Err(crate::Error::Io(_))
        ));
    }
}
