//! Shared data model: identifiers, kill matrices, coverage and cost profiles,
//! orderings and detection curves.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid identifier {0:?}: must be non-empty with no comma, newline or surrounding whitespace")]
    InvalidId(String),

    #[error("duplicate record for ({mr}, {fault})")]
    DuplicateRecord { mr: String, fault: String },

    #[error("duplicate identifier {0}")]
    DuplicateId(String),

    #[error("unknown identifier {0}")]
    UnknownId(String),

    #[error("missing cell ({mr}, {fault})")]
    MissingCell { mr: String, fault: String },

    #[error("MR {0} has no test-case coverage sets")]
    EmptyTestCaseList(String),

    #[error("kill table has {rows} rows and {cols} columns, expected {mrs} x {faults}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        mrs: usize,
        faults: usize,
    },

    #[error("negative or non-finite cost {cost} for {mr}")]
    NegativeCost { mr: String, cost: f64 },

    #[error("ordering is not a permutation of the MR set")]
    NotAPermutation,

    #[error("dataset label must be non-empty")]
    EmptyLabel,
}

fn validate_label(s: &str) -> bool {
    !s.is_empty() && !s.contains([',', '\n', '\r']) && s.trim() == s
}

macro_rules! label_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
                let name = name.into();
                if validate_label(&name) {
                    Ok(Self(name))
                } else {
                    Err(ModelError::InvalidId(name))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

label_newtype!(
    /// Name of a metamorphic relation, e.g. `MR1`.
    MrId
);
label_newtype!(
    /// Name of a fault (usually a mutant), e.g. `PIT_0042`.
    FaultId
);

fn check_unique<'a, T: fmt::Display + Eq + std::hash::Hash + 'a>(
    ids: impl IntoIterator<Item = &'a T>,
) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(ModelError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// Boolean MR x fault detection records from one test-execution campaign.
///
/// Rows are MRs and columns are faults, both in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KillMatrix {
    mrs: Vec<MrId>,
    faults: Vec<FaultId>,
    kills: Vec<Vec<bool>>,
}

impl KillMatrix {
    /// Builds a matrix from a fully populated table indexed `[mr][fault]`.
    pub fn from_table(
        mrs: Vec<MrId>,
        faults: Vec<FaultId>,
        kills: Vec<Vec<bool>>,
    ) -> Result<Self, ModelError> {
        check_unique(&mrs)?;
        check_unique(&faults)?;
        let bad_cols = kills.iter().find(|row| row.len() != faults.len());
        if kills.len() != mrs.len() || bad_cols.is_some() {
            return Err(ModelError::DimensionMismatch {
                rows: kills.len(),
                cols: bad_cols.map_or(faults.len(), Vec::len),
                mrs: mrs.len(),
                faults: faults.len(),
            });
        }
        Ok(Self { mrs, faults, kills })
    }

    /// Builds a matrix from sparse `(mr, fault, killed)` records.
    ///
    /// With `dense_default_false` unset, every pair must be recorded exactly once.
    pub fn from_records(
        mrs: Vec<MrId>,
        faults: Vec<FaultId>,
        records: &[(MrId, FaultId, bool)],
        dense_default_false: bool,
    ) -> Result<Self, ModelError> {
        check_unique(&mrs)?;
        check_unique(&faults)?;
        let mr_index: HashMap<&MrId, usize> = mrs.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let fault_index: HashMap<&FaultId, usize> =
            faults.iter().enumerate().map(|(i, f)| (f, i)).collect();

        let mut cells: Vec<Vec<Option<bool>>> = vec![vec![None; faults.len()]; mrs.len()];
        for (mr, fault, killed) in records {
            let r = *mr_index
                .get(mr)
                .ok_or_else(|| ModelError::UnknownId(mr.to_string()))?;
            let c = *fault_index
                .get(fault)
                .ok_or_else(|| ModelError::UnknownId(fault.to_string()))?;
            if cells[r][c].replace(*killed).is_some() {
                return Err(ModelError::DuplicateRecord {
                    mr: mr.to_string(),
                    fault: fault.to_string(),
                });
            }
        }

        let mut kills = Vec::with_capacity(mrs.len());
        for (r, row) in cells.into_iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (c, cell) in row.into_iter().enumerate() {
                match cell {
                    Some(v) => out.push(v),
                    None if dense_default_false => out.push(false),
                    None => {
                        return Err(ModelError::MissingCell {
                            mr: mrs[r].to_string(),
                            fault: faults[c].to_string(),
                        })
                    }
                }
            }
            kills.push(out);
        }
        Ok(Self { mrs, faults, kills })
    }

    pub fn mrs(&self) -> &[MrId] {
        &self.mrs
    }

    pub fn faults(&self) -> &[FaultId] {
        &self.faults
    }

    pub fn num_mrs(&self) -> usize {
        self.mrs.len()
    }

    pub fn num_faults(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mrs.is_empty()
    }

    pub fn killed(&self, mr: usize, fault: usize) -> bool {
        self.kills[mr][fault]
    }

    /// Row of the kill table for the MR at `mr`.
    pub fn row(&self, mr: usize) -> &[bool] {
        &self.kills[mr]
    }

    pub fn mr_index(&self, mr: &MrId) -> Option<usize> {
        self.mrs.iter().position(|m| m == mr)
    }

    /// Fault indices killed by the MR at `mr`, ascending.
    pub fn kills_of(&self, mr: usize) -> Vec<usize> {
        self.kills[mr]
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub fn kill_count(&self, mr: usize) -> usize {
        self.kills[mr].iter().filter(|&&k| k).count()
    }

    /// Whether some MR kills the fault at column `fault`.
    pub fn is_killable(&self, fault: usize) -> bool {
        self.kills.iter().any(|row| row[fault])
    }

    /// Keeps only the columns for which `keep` returns true, preserving order.
    pub(crate) fn retain_faults(&self, mut keep: impl FnMut(usize, &FaultId) -> bool) -> Self {
        let cols: Vec<usize> = (0..self.faults.len())
            .filter(|&c| keep(c, &self.faults[c]))
            .collect();
        Self {
            mrs: self.mrs.clone(),
            faults: cols.iter().map(|&c| self.faults[c].clone()).collect(),
            kills: self
                .kills
                .iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect(),
        }
    }
}

/// Faults killed by at least one MR, in declaration order.
pub fn killable_faults(km: &KillMatrix) -> BTreeSet<FaultId> {
    (0..km.num_faults())
        .filter(|&c| km.is_killable(c))
        .map(|c| km.faults[c].clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageCriterion {
    Statement,
    Branch,
}

impl fmt::Display for CoverageCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoverageCriterion::Statement => "statement",
            CoverageCriterion::Branch => "branch",
        })
    }
}

pub type UnitSet = BTreeSet<String>;

/// Per-MR sets of covered statement and branch units.
///
/// A criterion is `None` when it was never collected; when present it holds
/// one (possibly empty) set per MR, aligned with `mrs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageProfile {
    mrs: Vec<MrId>,
    statements: Option<Vec<UnitSet>>,
    branches: Option<Vec<UnitSet>>,
}

impl CoverageProfile {
    pub fn new(
        mrs: Vec<MrId>,
        statements: Option<Vec<UnitSet>>,
        branches: Option<Vec<UnitSet>>,
    ) -> Result<Self, ModelError> {
        check_unique(&mrs)?;
        for sets in [&statements, &branches].into_iter().flatten() {
            if sets.len() != mrs.len() {
                return Err(ModelError::DimensionMismatch {
                    rows: sets.len(),
                    cols: 1,
                    mrs: mrs.len(),
                    faults: 1,
                });
            }
        }
        Ok(Self {
            mrs,
            statements,
            branches,
        })
    }

    pub fn mrs(&self) -> &[MrId] {
        &self.mrs
    }

    pub fn units(&self, criterion: CoverageCriterion) -> Option<&[UnitSet]> {
        match criterion {
            CoverageCriterion::Statement => self.statements.as_deref(),
            CoverageCriterion::Branch => self.branches.as_deref(),
        }
    }
}

/// Unions the per-test-case unit sets of each MR (source and follow-up
/// executions alike) into one set per MR for the given criterion.
pub fn union_coverage(
    per_test_case: &[(MrId, Vec<UnitSet>)],
    criterion: CoverageCriterion,
) -> Result<CoverageProfile, ModelError> {
    let mut mrs = Vec::with_capacity(per_test_case.len());
    let mut sets = Vec::with_capacity(per_test_case.len());
    for (mr, cases) in per_test_case {
        if cases.is_empty() {
            return Err(ModelError::EmptyTestCaseList(mr.to_string()));
        }
        mrs.push(mr.clone());
        sets.push(cases.iter().flatten().cloned().collect::<UnitSet>());
    }
    match criterion {
        CoverageCriterion::Statement => CoverageProfile::new(mrs, Some(sets), None),
        CoverageCriterion::Branch => CoverageProfile::new(mrs, None, Some(sets)),
    }
}

/// Seconds needed to run each MR's source and follow-up test cases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostProfile {
    costs: BTreeMap<MrId, f64>,
    order: Vec<MrId>,
}

impl CostProfile {
    pub fn new(entries: impl IntoIterator<Item = (MrId, f64)>) -> Result<Self, ModelError> {
        let mut profile = Self::default();
        for (mr, cost) in entries {
            if !cost.is_finite() || cost < 0.0 {
                return Err(ModelError::NegativeCost {
                    mr: mr.to_string(),
                    cost,
                });
            }
            if profile.costs.insert(mr.clone(), cost).is_some() {
                return Err(ModelError::DuplicateId(mr.to_string()));
            }
            profile.order.push(mr);
        }
        Ok(profile)
    }

    pub fn get(&self, mr: &MrId) -> Option<f64> {
        self.costs.get(mr).copied()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&MrId, f64)> {
        self.order.iter().map(|m| (m, self.costs[m]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FaultBased,
    StatementCoverage,
    BranchCoverage,
    Random,
    Optimal,
    External,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FaultBased => "fault_based",
            Method::StatementCoverage => "statement_coverage",
            Method::BranchCoverage => "branch_coverage",
            Method::Random => "random",
            Method::Optimal => "optimal",
            Method::External => "external",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    Prioritizing,
    Validation,
}

/// Provenance labels for one campaign (test suite + fault source).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub label: String,
    pub role: DatasetRole,
    #[serde(default)]
    pub test_suite_label: String,
    #[serde(default)]
    pub fault_tool_label: String,
}

impl DatasetMeta {
    pub fn new(
        label: impl Into<String>,
        role: DatasetRole,
        test_suite_label: impl Into<String>,
        fault_tool_label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let label = label.into();
        if label.is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        Ok(Self {
            label,
            role,
            test_suite_label: test_suite_label.into(),
            fault_tool_label: fault_tool_label.into(),
        })
    }

    /// Placeholder provenance for data that came from nowhere in particular.
    pub fn unlabeled(role: DatasetRole) -> Self {
        Self {
            label: "unlabeled".to_string(),
            role,
            test_suite_label: String::new(),
            fault_tool_label: String::new(),
        }
    }
}

/// A full permutation of an MR set together with how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrOrdering {
    order: Vec<MrId>,
    pub method: Method,
    pub seed: Option<u64>,
    pub source_dataset: DatasetMeta,
}

impl MrOrdering {
    /// Wraps `order` after checking it is a permutation of `universe`.
    pub fn new(
        order: Vec<MrId>,
        universe: &[MrId],
        method: Method,
        seed: Option<u64>,
        source_dataset: DatasetMeta,
    ) -> Result<Self, ModelError> {
        if !same_mr_set(&order, universe) {
            return Err(ModelError::NotAPermutation);
        }
        Ok(Self {
            order,
            method,
            seed,
            source_dataset,
        })
    }

    pub fn order(&self) -> &[MrId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The first `n` MRs (all of them if `n` exceeds the length).
    pub fn top(&self, n: usize) -> &[MrId] {
        &self.order[..n.min(self.order.len())]
    }
}

/// True when `a` and `b` hold the same MRs, each exactly once.
pub fn same_mr_set(a: &[MrId], b: &[MrId]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sa: HashSet<&MrId> = a.iter().collect();
    sa.len() == a.len() && b.iter().all(|m| sa.contains(m))
}

/// Cumulative fault-detection percentage for prefix sizes `m = 1..=M`.
///
/// `values()[m - 1]` is the value at prefix size `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectionCurve(Vec<f64>);

impl DetectionCurve {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Value at prefix size `m` (1-based).
    pub fn at(&self, m: usize) -> f64 {
        self.0[m - 1]
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }
}
