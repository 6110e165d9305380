//! Metamorphic relation (MR) prioritization for regression testing.
//!
//! Orders MRs by fault-detection history or by statement/branch coverage,
//! and evaluates orderings against a validation fault set: detection curves,
//! a random baseline, a greedy optimal ordering, effective MR set size,
//! time to detect a fault, and one-sided paired permutation tests.

pub mod cli;
pub mod experiment;
pub mod formats;
pub mod metrics;
pub mod model;
pub mod prioritize;
pub mod report;
pub mod seeding;
pub mod stats;
pub mod synth;

pub use model::{
    killable_faults, union_coverage, CostProfile, CoverageCriterion, CoverageProfile, DatasetMeta,
    DatasetRole, DetectionCurve, FaultId, KillMatrix, Method, MrId, MrOrdering,
};
