//! Count-table readers and writers.
//!
//! Two input layouts are accepted:
//!
//! - `tsv-dir`: a directory with one `*.tsv` file per replicate, each line
//!   `clone_id<TAB>count`. A first line whose second field is not a number
//!   is a header. Replicates are ordered by file name and named by file stem.
//! - `matrix-tsv`: one file with header `clone_id<TAB>rep1<TAB>…<TAB>repn`
//!   and one row per clone.
//!
//! Both accept LF or CRLF line endings and skip blank lines. Duplicate clone
//! ids within a replicate are an error, never summed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{ReplicateObservation, ReplicateStudy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    TsvDir,
    MatrixTsv,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv-dir" => Ok(InputFormat::TsvDir),
            "matrix-tsv" => Ok(InputFormat::MatrixTsv),
            _ => Err(Error::InvalidSpec(format!("unknown input format {s:?}"))),
        }
    }
}

pub fn parse_replicates(path: &Path, format: InputFormat) -> Result<ReplicateStudy> {
    match format {
        InputFormat::TsvDir => parse_tsv_dir(path),
        InputFormat::MatrixTsv => parse_matrix_tsv(path),
    }
}

/// Reads every `*.tsv` file in `dir`, in lexicographic file-name order.
pub fn parse_tsv_dir(dir: &Path) -> Result<ReplicateStudy> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "tsv") {
            files.push(path);
        }
    }
    files.sort();
    parse_tsv_files(&files)
}

/// Reads the given replicate files in the order given.
pub fn parse_tsv_files<P: AsRef<Path>>(files: &[P]) -> Result<ReplicateStudy> {
    let reps = files
        .iter()
        .map(|f| parse_tsv_file(f.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    ReplicateStudy::new(reps)
}

/// One two-column replicate file, named by its file stem.
pub fn parse_tsv_file(path: &Path) -> Result<ReplicateObservation> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut counts = Vec::new();
    let mut seen = BTreeSet::new();
    for (line_no, line) in lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(malformed(
                path,
                line_no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        if line_no == 1 && !looks_numeric(fields[1]) {
            continue;
        }
        let id = clone_field(path, line_no, fields[0])?;
        let count = count_field(path, line_no, fields[1])?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateCloneId {
                file: path.to_path_buf(),
                line: line_no,
                id: id.to_string(),
            });
        }
        counts.push((id.to_string(), count));
    }
    let rep = ReplicateObservation::new(name.clone(), counts)?;
    if rep.total_reads() == 0 {
        return Err(Error::EmptyReplicate { replicate: name });
    }
    Ok(rep)
}

/// Reads a clone-by-replicate count matrix; replicates follow column order.
pub fn parse_matrix_tsv(path: &Path) -> Result<ReplicateStudy> {
    let text = fs::read_to_string(path)?;
    let mut rows = lines(&text);
    let (_, header) = rows.next().ok_or_else(|| malformed(path, 1, "missing header".into()))?;
    let names: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(malformed(path, 1, "header names no replicates".into()));
    }
    let mut columns: Vec<Vec<(String, u64)>> = vec![Vec::new(); names.len()];
    let mut seen = BTreeSet::new();
    for (line_no, line) in rows {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != names.len() + 1 {
            return Err(malformed(
                path,
                line_no,
                format!("expected {} fields, found {}", names.len() + 1, fields.len()),
            ));
        }
        let id = clone_field(path, line_no, fields[0])?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateCloneId {
                file: path.to_path_buf(),
                line: line_no,
                id: id.to_string(),
            });
        }
        for (col, field) in columns.iter_mut().zip(&fields[1..]) {
            col.push((id.to_string(), count_field(path, line_no, field)?));
        }
    }
    let reps = names
        .into_iter()
        .zip(columns)
        .map(|(name, counts)| {
            let rep = ReplicateObservation::new(name.clone(), counts)?;
            if rep.total_reads() == 0 {
                return Err(Error::EmptyReplicate { replicate: name });
            }
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    ReplicateStudy::new(reps)
}

/// Non-blank lines with 1-based numbers, line endings and a leading BOM
/// removed.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn looks_numeric(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok()
}

fn malformed(path: &Path, line: usize, reason: String) -> Error {
    Error::MalformedLine {
        file: path.to_path_buf(),
        line,
        reason,
    }
}

fn clone_field<'a>(path: &Path, line: usize, s: &'a str) -> Result<&'a str> {
    let id = s.trim();
    if id.is_empty() {
        return Err(malformed(path, line, "empty clone id".into()));
    }
    Ok(id)
}

fn count_field(path: &Path, line: usize, s: &str) -> Result<u64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(Error::NegativeCount {
            file: path.to_path_buf(),
            line,
        }),
        _ => Err(malformed(
            path,
            line,
            format!("count {s:?} is not a nonnegative integer"),
        )),
    }
}

/// Writes one `<name>.tsv` per replicate with a `clone_id<TAB>count` header.
/// Reading the directory back preserves replicate order when names sort in
/// index order, as simulator names do.
pub fn write_tsv_dir(study: &ReplicateStudy, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for rep in study.replicates() {
        let path = dir.join(format!("{}.tsv", rep.name()));
        let mut out = String::from("clone_id\tcount\n");
        for (id, c) in rep.counts() {
            out.push_str(&format!("{id}\t{c}\n"));
        }
        fs::write(&path, out)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the study as one clone-by-replicate matrix over its universe.
pub fn write_matrix_tsv(study: &ReplicateStudy, path: &Path) -> Result<()> {
    let mut out = String::from("clone_id");
    for rep in study.replicates() {
        out.push('\t');
        out.push_str(rep.name());
    }
    out.push('\n');
    for id in study.universe() {
        out.push_str(id);
        for rep in study.replicates() {
            out.push_str(&format!("\t{}", rep.counts().get(id).copied().unwrap_or(0)));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Square matrix as TSV with row and column labels; values with 17
/// significant digits.
pub fn write_labeled_matrix(path: &Path, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    assert_eq!(labels.len(), m.nrows());
    assert_eq!(labels.len(), m.ncols());
    let mut out = String::new();
    for l in labels {
        out.push('\t');
        out.push_str(l);
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(l);
        for j in 0..m.ncols() {
            out.push_str(&format!("\t{:.16e}", m[(i, j)]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Ground truth written next to simulated replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub format_version: String,
    pub theta: f64,
    pub clones: usize,
    pub seed: u64,
    pub population: crate::simulator::PopulationSpec,
    pub replicates: crate::simulator::ReplicateSpec,
    pub frequencies: BTreeMap<String, f64>,
}
