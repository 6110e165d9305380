//! On-disk formats and matrix hygiene.
//!
//! Kill matrix (CSV, faults as rows):
//!
//! ```text
//! fault_id,MR1,MR2
//! f1,1,0
//! f2,0,0
//! ```
//!
//! Coverage (JSON): `{"MR1": {"statements": [..], "branches": [..]}, ..}`.
//!
//! Costs (CSV): header `mr_id,seconds`, one row per MR.
//!
//! Paired samples (CSV): header `treatment,control`, one row per pair.
//!
//! Input accepts LF or CRLF line endings; output is always LF.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::metrics::Denominator;
use crate::model::{
    CostProfile, CoverageCriterion, CoverageProfile, FaultId, KillMatrix, ModelError, MrId, UnitSet,
};
use crate::synth::SynthSpec;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("line {line}: bad cell {value:?} (expected 0 or 1)")]
    BadCell { line: u64, value: String },

    #[error("line {line}: bad number {value:?}")]
    BadNumber { line: u64, value: String },

    #[error("duplicate identifier {0}")]
    DuplicateId(String),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{0}")]
    InvalidId(String),

    #[error("MR {mr}: missing field {field:?}")]
    MissingField { mr: String, field: &'static str },

    #[error("duplicate MR {0}")]
    DuplicateMr(String),

    #[error("line {line}: negative cost for {mr}")]
    NegativeCost { line: u64, mr: String },

    #[error("unknown fault id {0}")]
    UnknownFaultId(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn check_width(rec: &csv::StringRecord, expected: usize) -> Result<(), FormatError> {
    if rec.len() != expected {
        return Err(FormatError::RaggedRow {
            line: line_of(rec),
            expected,
            found: rec.len(),
        });
    }
    Ok(())
}

fn id_err(e: ModelError) -> FormatError {
    FormatError::InvalidId(e.to_string())
}

pub fn parse_kill_matrix(path: &Path) -> Result<KillMatrix, FormatError> {
    kill_matrix_from_str(&read_text(path)?)
}

pub fn kill_matrix_from_str(text: &str) -> Result<KillMatrix, FormatError> {
    let mut records = csv_reader(text).into_records();
    let header = records
        .next()
        .transpose()?
        .ok_or_else(|| FormatError::MalformedHeader("empty file".into()))?;
    if header.get(0) != Some("fault_id") {
        return Err(FormatError::MalformedHeader(
            "first column must be fault_id".into(),
        ));
    }
    let mut mrs = Vec::with_capacity(header.len() - 1);
    let mut seen = HashSet::new();
    for name in header.iter().skip(1) {
        let mr = MrId::new(name).map_err(|e| FormatError::MalformedHeader(e.to_string()))?;
        if !seen.insert(mr.clone()) {
            return Err(FormatError::DuplicateId(name.to_string()));
        }
        mrs.push(mr);
    }

    let mut faults = Vec::new();
    let mut columns: Vec<Vec<bool>> = Vec::new();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec?;
        check_width(&rec, mrs.len() + 1)?;
        let fault = FaultId::new(&rec[0]).map_err(id_err)?;
        if !seen.insert(fault.clone()) {
            return Err(FormatError::DuplicateId(fault.to_string()));
        }
        let cells = rec
            .iter()
            .skip(1)
            .map(|v| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(FormatError::BadCell {
                    line: line_of(&rec),
                    value: other.to_string(),
                }),
            })
            .collect::<Result<Vec<bool>, _>>()?;
        faults.push(fault);
        columns.push(cells);
    }

    let table = (0..mrs.len())
        .map(|r| columns.iter().map(|col| col[r]).collect())
        .collect();
    Ok(KillMatrix::from_table(mrs, faults, table).expect("validated above"))
}

pub fn kill_matrix_to_string(km: &KillMatrix) -> String {
    let mut w = csv_writer();
    let header: Vec<&str> = std::iter::once("fault_id")
        .chain(km.mrs().iter().map(MrId::as_str))
        .collect();
    w.write_record(&header).expect("in-memory write");
    for (c, fault) in km.faults().iter().enumerate() {
        let row: Vec<&str> = std::iter::once(fault.as_str())
            .chain((0..km.num_mrs()).map(|r| if km.killed(r, c) { "1" } else { "0" }))
            .collect();
        w.write_record(&row).expect("in-memory write");
    }
    finish_csv(w)
}

pub fn write_kill_matrix(km: &KillMatrix, path: &Path) -> Result<(), FormatError> {
    write_text(path, &kill_matrix_to_string(km))
}

#[derive(Deserialize)]
struct RawCoverage {
    statements: Option<Vec<String>>,
    branches: Option<Vec<String>>,
}

/// Top-level coverage object, kept in document order with duplicates visible.
struct CoverageDoc(Vec<(String, RawCoverage)>);

impl<'de> Deserialize<'de> for CoverageDoc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct DocVisitor;

        impl<'de> Visitor<'de> for DocVisitor {
            type Value = CoverageDoc;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping MR names to coverage entries")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<CoverageDoc, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, RawCoverage>()? {
                    entries.push((k, v));
                }
                Ok(CoverageDoc(entries))
            }
        }

        d.deserialize_map(DocVisitor)
    }
}

pub fn parse_coverage(path: &Path) -> Result<CoverageProfile, FormatError> {
    coverage_from_str(&read_text(path)?)
}

pub fn coverage_from_str(text: &str) -> Result<CoverageProfile, FormatError> {
    let doc: CoverageDoc = serde_json::from_str(text)?;
    let mut mrs = Vec::with_capacity(doc.0.len());
    let mut statements = Vec::with_capacity(doc.0.len());
    let mut branches = Vec::with_capacity(doc.0.len());
    let mut seen = HashSet::new();
    for (name, raw) in doc.0 {
        let mr = MrId::new(&name).map_err(id_err)?;
        if !seen.insert(mr.clone()) {
            return Err(FormatError::DuplicateMr(name));
        }
        let missing = |field| FormatError::MissingField {
            mr: name.clone(),
            field,
        };
        let s = raw.statements.ok_or_else(|| missing("statements"))?;
        let b = raw.branches.ok_or_else(|| missing("branches"))?;
        mrs.push(mr);
        statements.push(s.into_iter().collect::<UnitSet>());
        branches.push(b.into_iter().collect::<UnitSet>());
    }
    Ok(CoverageProfile::new(mrs, Some(statements), Some(branches)).expect("validated above"))
}

struct CoverageOut<'a>(&'a CoverageProfile);

struct EntryOut<'a> {
    statements: Option<&'a BTreeSet<String>>,
    branches: Option<&'a BTreeSet<String>>,
}

impl Serialize for EntryOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        if let Some(st) = self.statements {
            m.serialize_entry("statements", st)?;
        }
        if let Some(br) = self.branches {
            m.serialize_entry("branches", br)?;
        }
        m.end()
    }
}

impl Serialize for CoverageOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let cov = self.0;
        let st = cov.units(CoverageCriterion::Statement);
        let br = cov.units(CoverageCriterion::Branch);
        let mut m = s.serialize_map(Some(cov.mrs().len()))?;
        for (i, mr) in cov.mrs().iter().enumerate() {
            m.serialize_entry(
                mr.as_str(),
                &EntryOut {
                    statements: st.map(|v| &v[i]),
                    branches: br.map(|v| &v[i]),
                },
            )?;
        }
        m.end()
    }
}

/// Serializes in MR declaration order. A criterion that was never collected
/// is omitted, so such profiles do not parse back.
pub fn coverage_to_string(cov: &CoverageProfile) -> String {
    let mut s = serde_json::to_string_pretty(&CoverageOut(cov)).expect("plain data");
    s.push('\n');
    s
}

fn parse_number(value: &str, line: u64) -> Result<f64, FormatError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| FormatError::BadNumber {
            line,
            value: value.to_string(),
        })
}

fn expect_header(
    records: &mut impl Iterator<Item = csv::Result<csv::StringRecord>>,
    expected: &[&str],
) -> Result<(), FormatError> {
    let header = records
        .next()
        .transpose()?
        .ok_or_else(|| FormatError::MalformedHeader("empty file".into()))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(FormatError::MalformedHeader(format!(
            "expected {}",
            expected.join(",")
        )));
    }
    Ok(())
}

pub fn parse_costs(path: &Path) -> Result<CostProfile, FormatError> {
    costs_from_str(&read_text(path)?)
}

pub fn costs_from_str(text: &str) -> Result<CostProfile, FormatError> {
    let mut records = csv_reader(text).into_records();
    expect_header(&mut records, &["mr_id", "seconds"])?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec?;
        check_width(&rec, 2)?;
        let line = line_of(&rec);
        let mr = MrId::new(&rec[0]).map_err(id_err)?;
        if !seen.insert(mr.clone()) {
            return Err(FormatError::DuplicateMr(mr.to_string()));
        }
        let seconds = parse_number(&rec[1], line)?;
        if seconds < 0.0 {
            return Err(FormatError::NegativeCost {
                line,
                mr: mr.to_string(),
            });
        }
        entries.push((mr, seconds));
    }
    Ok(CostProfile::new(entries).expect("validated above"))
}

pub fn costs_to_string(costs: &CostProfile) -> String {
    let mut w = csv_writer();
    w.write_record(["mr_id", "seconds"])
        .expect("in-memory write");
    for (mr, s) in costs.iter() {
        w.write_record([mr.as_str(), &s.to_string()])
            .expect("in-memory write");
    }
    finish_csv(w)
}

pub fn write_costs(costs: &CostProfile, path: &Path) -> Result<(), FormatError> {
    write_text(path, &costs_to_string(costs))
}

/// Reads `treatment,control` rows.
pub fn parse_pairs(path: &Path) -> Result<Vec<(f64, f64)>, FormatError> {
    pairs_from_str(&read_text(path)?)
}

pub fn pairs_from_str(text: &str) -> Result<Vec<(f64, f64)>, FormatError> {
    let mut records = csv_reader(text).into_records();
    expect_header(&mut records, &["treatment", "control"])?;
    records
        .map(|rec| {
            let rec = rec?;
            check_width(&rec, 2)?;
            let line = line_of(&rec);
            Ok((parse_number(&rec[0], line)?, parse_number(&rec[1], line)?))
        })
        .collect()
}

/// Drops the listed duplicate faults and, optionally, faults no MR kills.
/// Surviving cells and their order are untouched.
pub fn filter_faults(
    km: &KillMatrix,
    drop_all_false: bool,
    duplicate_ids: &BTreeSet<FaultId>,
) -> Result<KillMatrix, FormatError> {
    let known: HashSet<&FaultId> = km.faults().iter().collect();
    if let Some(unknown) = duplicate_ids.iter().find(|f| !known.contains(f)) {
        return Err(FormatError::UnknownFaultId(unknown.to_string()));
    }
    Ok(km.retain_faults(|c, f| {
        !duplicate_ids.contains(f) && !(drop_all_false && !km.is_killable(c))
    }))
}

/// Where a dataset comes from: a kill-matrix file or a synthetic spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
    pub label: String,
    #[serde(default)]
    pub test_suite_label: String,
    #[serde(default)]
    pub fault_tool_label: String,
    /// Drop faults that no MR kills.
    #[serde(default)]
    pub drop_all_false: bool,
    /// Faults to drop as duplicates of faults in the other dataset.
    #[serde(default)]
    pub duplicate_faults: Vec<FaultId>,
}

/// Costs drawn per replicate instead of read from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCosts {
    pub mean_seconds: f64,
    pub sd_seconds: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub prioritizing: DatasetSource,
    pub validation: DatasetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_costs: Option<SyntheticCosts>,
    /// Independent synthetic draws of this run; replicate `r` shifts every
    /// synthetic seed by `r`. Only meaningful when both datasets are synthetic.
    #[serde(default = "one")]
    pub replicates: usize,
}

fn one() -> usize {
    1
}

fn default_thresholds() -> Vec<f64> {
    vec![5.0, 2.5]
}

fn default_random_n() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.05
}

fn default_max_exact_n() -> usize {
    20
}

fn default_resamples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub runs: Vec<RunConfig>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_random_n")]
    pub random_n: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub denominator: Denominator,
    #[serde(default = "default_max_exact_n")]
    pub max_exact_n: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

impl ExperimentConfig {
    /// A config with default settings around `runs`.
    pub fn new(runs: Vec<RunConfig>, seed: u64) -> Self {
        Self {
            runs,
            thresholds: default_thresholds(),
            random_n: default_random_n(),
            seed,
            alpha: default_alpha(),
            denominator: Denominator::AllFaults,
            max_exact_n: default_max_exact_n(),
            resamples: default_resamples(),
        }
    }

    /// Joins every relative data path onto `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        for run in &mut self.runs {
            fix(&mut run.prioritizing.path);
            fix(&mut run.validation.path);
            fix(&mut run.coverage);
            fix(&mut run.costs);
        }
    }

    /// Checks field ranges; an empty run list is left to the runner.
    pub fn validate(&self) -> Result<(), FormatError> {
        let bad = |m: String| Err(FormatError::InvalidConfig(m));
        if let Some(t) = self.thresholds.iter().find(|t| t.is_nan() || **t <= 0.0) {
            return bad(format!("threshold {t} is not positive"));
        }
        if self.random_n == 0 {
            return bad("random_n must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        for (i, run) in self.runs.iter().enumerate() {
            for (role, ds) in [
                ("prioritizing", &run.prioritizing),
                ("validation", &run.validation),
            ] {
                if ds.path.is_some() == ds.synthetic.is_some() {
                    return bad(format!(
                        "run {i} {role}: give exactly one of path or synthetic"
                    ));
                }
                if ds.label.is_empty() {
                    return bad(format!("run {i} {role}: label must be non-empty"));
                }
            }
            if run.replicates == 0 {
                return bad(format!("run {i}: replicates must be at least 1"));
            }
            if run.costs.is_some() && run.synthetic_costs.is_some() {
                return bad(format!(
                    "run {i}: give at most one of costs or synthetic_costs"
                ));
            }
        }
        Ok(())
    }
}

/// Reads a config file. Relative data paths inside it are taken relative to
/// the file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, FormatError> {
    let mut cfg = config_from_str(&read_text(path)?)?;
    if let Some(base) = path.parent() {
        cfg.resolve_paths(base);
    }
    Ok(cfg)
}

pub fn config_from_str(text: &str) -> Result<ExperimentConfig, FormatError> {
    let cfg: ExperimentConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}
