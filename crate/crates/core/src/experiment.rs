//! End-to-end evaluation runs.
//!
//! For every configured run: order MRs on the prioritizing matrix (faults,
//! and coverage when supplied), build the random baseline and the greedy
//! optimal ordering, then measure everything on the validation matrix.
//! Synthetic runs can be replicated; replicates are the pairing unit of the
//! run's permutation tests. Across runs, the aggregate pairs runs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Serialize, Serializer};

use crate::formats::{
    self, filter_faults, DatasetSource, ExperimentConfig, FormatError, RunConfig,
};
use crate::metrics::{
    avg_time_to_detect, detection_curve_over, effective_set_size, mean_curve, relative_improvement,
    time_reduction, Denominator, MetricsError,
};
use crate::model::{
    same_mr_set, CostProfile, CoverageCriterion, CoverageProfile, DatasetMeta, DatasetRole,
    DetectionCurve, FaultId, KillMatrix, Method, MrId,
};
use crate::prioritize::{
    coverage_based_order, fault_based_order, optimal_order, random_orders, PrioritizeError,
};
use crate::seeding::derive_seed;
use crate::stats::{
    paired_permutation_test, significance_flag, Alternative, PairedSample, PermutationConfig,
    StatsError, TestMode,
};
use crate::synth::{gen_costs, gen_kill_matrix, SynthError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Stats(#[from] StatsError),

    #[error("MR sets differ: {0}")]
    MrSetMismatch(String),

    #[error("{0}")]
    InvalidRun(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config has no runs")]
    EmptyConfig,

    #[error(transparent)]
    Config(#[from] FormatError),

    #[error("run {index} ({label}): {source}")]
    Run {
        index: usize,
        label: String,
        #[source]
        source: RunError,
    },
}

/// One directional comparison: does `treatment` detect more than `control`?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Comparison {
    pub treatment: Method,
    pub control: Method,
}

impl Comparison {
    const fn new(treatment: Method, control: Method) -> Self {
        Self { treatment, control }
    }

    pub fn label(&self) -> String {
        format!("{}>{}", self.treatment, self.control)
    }
}

/// Prioritization methods vs the random baseline, the optimal ordering vs
/// each method, then fault-based vs the coverage methods.
pub const COMPARISONS: [Comparison; 8] = [
    Comparison::new(Method::FaultBased, Method::Random),
    Comparison::new(Method::StatementCoverage, Method::Random),
    Comparison::new(Method::BranchCoverage, Method::Random),
    Comparison::new(Method::Optimal, Method::FaultBased),
    Comparison::new(Method::Optimal, Method::StatementCoverage),
    Comparison::new(Method::Optimal, Method::BranchCoverage),
    Comparison::new(Method::FaultBased, Method::StatementCoverage),
    Comparison::new(Method::FaultBased, Method::BranchCoverage),
];

pub const METHODS: [Method; 5] = [
    Method::FaultBased,
    Method::StatementCoverage,
    Method::BranchCoverage,
    Method::Random,
    Method::Optimal,
];

fn ser_f64s<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for v in values {
        if v.is_finite() {
            seq.serialize_element(v)?;
        } else {
            seq.serialize_element(&v.to_string())?;
        }
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementRow {
    #[serde(flatten)]
    pub comparison: Comparison,
    /// `100 * (treatment - control) / control` per set size; `inf` when the
    /// control detects nothing but the treatment does.
    #[serde(serialize_with = "ser_f64s")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveSizeRow {
    pub method: Method,
    pub threshold: f64,
    /// `None` when the threshold is never met.
    pub size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    #[serde(flatten)]
    pub comparison: Comparison,
    pub set_size: usize,
    pub p_value: f64,
    pub n: usize,
    pub mode: TestMode,
    pub significant: bool,
}

/// Measures over a group of evaluation units (replicates of one run, or the
/// runs of a config).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Mean detection curve per method over the units.
    pub curves: BTreeMap<Method, DetectionCurve>,
    pub not_computed: Vec<Method>,
    pub improvements_vs_random: Vec<ImprovementRow>,
    pub improvements_of_optimal: Vec<ImprovementRow>,
    pub effective_sizes: Vec<EffectiveSizeRow>,
    /// Mean time to detect a fault, seconds. Random is the mean over the
    /// random orderings.
    pub avg_time: BTreeMap<Method, f64>,
    /// Time reduction relative to the random baseline, percent.
    pub time_reduction: BTreeMap<Method, f64>,
    pub tests: Vec<TestRow>,
    pub alpha: f64,
}

impl Summary {
    pub fn improvement(&self, c: Comparison) -> Option<&ImprovementRow> {
        self.improvements_vs_random
            .iter()
            .chain(&self.improvements_of_optimal)
            .find(|r| r.comparison == c)
    }

    pub fn test(&self, c: Comparison, set_size: usize) -> Option<&TestRow> {
        self.tests
            .iter()
            .find(|t| t.comparison == c && t.set_size == set_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingRecord {
    pub replicate: usize,
    pub method: Method,
    pub seed: u64,
    pub order: Vec<MrId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_seed: u64,
    pub run_seed: u64,
    pub random_n: usize,
    pub denominator: Denominator,
    pub prioritizing: DatasetMeta,
    pub validation: DatasetMeta,
    /// Base seed of the random orderings per replicate; ordering `i` uses
    /// base + i.
    pub random_seeds: Vec<u64>,
    pub orderings: Vec<OrderingRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub index: usize,
    pub label: String,
    pub num_mrs: usize,
    pub num_validation_faults: usize,
    pub replicates: usize,
    #[serde(flatten)]
    pub summary: Summary,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub num_mrs: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub runs: Vec<RunReport>,
    /// Cross-run table; absent when runs disagree on the number of MRs.
    pub aggregate: Option<AggregateReport>,
}

/// Curves and times of one evaluation unit.
#[derive(Debug, Clone, Default)]
struct UnitResult {
    curves: BTreeMap<Method, DetectionCurve>,
    times: BTreeMap<Method, f64>,
}

struct Dataset {
    matrix: KillMatrix,
    meta: DatasetMeta,
}

fn load_dataset(
    src: &DatasetSource,
    role: DatasetRole,
    replicate: u64,
) -> Result<Dataset, RunError> {
    let raw = match (&src.path, &src.synthetic) {
        (Some(path), None) => formats::parse_kill_matrix(path)?,
        (None, Some(spec)) => gen_kill_matrix(&spec.shifted(replicate))?.matrix,
        _ => {
            return Err(RunError::InvalidRun(
                "dataset needs exactly one of path or synthetic".into(),
            ))
        }
    };
    let dups: BTreeSet<FaultId> = src.duplicate_faults.iter().cloned().collect();
    let matrix = filter_faults(&raw, src.drop_all_false, &dups)?;
    let meta = DatasetMeta::new(
        src.label.clone(),
        role,
        src.test_suite_label.clone(),
        src.fault_tool_label.clone(),
    )
    .map_err(|e| RunError::InvalidRun(e.to_string()))?;
    Ok(Dataset { matrix, meta })
}

struct Inputs {
    fp: Dataset,
    fv: Dataset,
    coverage: Option<CoverageProfile>,
    costs: Option<CostProfile>,
}

fn load_inputs(run: &RunConfig, replicate: usize) -> Result<Inputs, RunError> {
    let r = replicate as u64;
    let fp = load_dataset(&run.prioritizing, DatasetRole::Prioritizing, r)?;
    let fv = load_dataset(&run.validation, DatasetRole::Validation, r)?;
    if !same_mr_set(fp.matrix.mrs(), fv.matrix.mrs()) {
        return Err(RunError::MrSetMismatch(
            "prioritizing and validation matrices".into(),
        ));
    }
    let coverage = run
        .coverage
        .as_deref()
        .map(formats::parse_coverage)
        .transpose()?;
    if let Some(cov) = &coverage {
        if !same_mr_set(cov.mrs(), fv.matrix.mrs()) {
            return Err(RunError::MrSetMismatch(
                "coverage profile and kill matrices".into(),
            ));
        }
    }
    let costs = match (&run.costs, &run.synthetic_costs) {
        (Some(path), _) => Some(formats::parse_costs(path)?),
        (None, Some(sc)) => Some(gen_costs(
            fv.matrix.mrs(),
            sc.mean_seconds,
            sc.sd_seconds,
            sc.seed.wrapping_add(r),
        )?),
        (None, None) => None,
    };
    if let Some(c) = &costs {
        if let Some(missing) = fv.matrix.mrs().iter().find(|m| c.get(m).is_none()) {
            return Err(MetricsError::MissingCost(missing.clone()).into());
        }
    }
    Ok(Inputs {
        fp,
        fv,
        coverage,
        costs,
    })
}

fn evaluate_replicate(
    inputs: &Inputs,
    config: &ExperimentConfig,
    seed: u64,
    replicate: usize,
    records: &mut Vec<OrderingRecord>,
) -> Result<(UnitResult, u64), RunError> {
    let fv = &inputs.fv.matrix;
    let mut orderings = Vec::new();

    orderings.push(fault_based_order(&inputs.fp.matrix, derive_seed(seed, 0))?.0);
    if let Some(cov) = &inputs.coverage {
        orderings
            .push(coverage_based_order(cov, CoverageCriterion::Statement, derive_seed(seed, 1))?.0);
        orderings
            .push(coverage_based_order(cov, CoverageCriterion::Branch, derive_seed(seed, 2))?.0);
    }
    orderings.push(optimal_order(fv, derive_seed(seed, 4))?.0);

    let mut unit = UnitResult::default();
    for mut o in orderings {
        o.source_dataset = match o.method {
            Method::Optimal => inputs.fv.meta.clone(),
            _ => inputs.fp.meta.clone(),
        };
        unit.curves
            .insert(o.method, detection_curve_over(&o, fv, config.denominator)?);
        if let Some(costs) = &inputs.costs {
            match avg_time_to_detect(&o, fv, costs) {
                Ok(t) => {
                    unit.times.insert(o.method, t);
                }
                Err(MetricsError::NoKillableFaults) => {}
                Err(e) => return Err(e.into()),
            }
        }
        records.push(OrderingRecord {
            replicate,
            method: o.method,
            seed: o.seed.unwrap_or_default(),
            order: o.order().to_vec(),
        });
    }

    let random_seed = derive_seed(seed, 3);
    let randoms = random_orders(fv.mrs(), config.random_n, random_seed)?;
    let curves = randoms
        .iter()
        .map(|o| detection_curve_over(o, fv, config.denominator))
        .collect::<Result<Vec<_>, _>>()?;
    unit.curves.insert(Method::Random, mean_curve(&curves)?);
    if let Some(costs) = &inputs.costs {
        let times: Result<Vec<f64>, _> = randoms
            .iter()
            .map(|o| avg_time_to_detect(o, fv, costs))
            .collect();
        match times {
            Ok(t) => {
                unit.times
                    .insert(Method::Random, t.iter().sum::<f64>() / t.len() as f64);
            }
            Err(MetricsError::NoKillableFaults) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok((unit, random_seed))
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Combines evaluation units into curves, improvements, sizes, times and
/// per-set-size permutation tests (when there are at least two units).
fn summarize(
    units: &[UnitResult],
    config: &ExperimentConfig,
    test_seed: u64,
) -> Result<Summary, RunError> {
    let present = |m: Method| units.iter().all(|u| u.curves.contains_key(&m));
    let mut curves = BTreeMap::new();
    let mut not_computed = Vec::new();
    for m in METHODS {
        if present(m) {
            let per_unit: Vec<DetectionCurve> =
                units.iter().map(|u| u.curves[&m].clone()).collect();
            curves.insert(m, mean_curve(&per_unit)?);
        } else {
            not_computed.push(m);
        }
    }

    let improvements = |range: std::ops::Range<usize>| -> Result<Vec<ImprovementRow>, RunError> {
        let mut rows = Vec::new();
        for c in &COMPARISONS[range] {
            if let (Some(t), Some(b)) = (curves.get(&c.treatment), curves.get(&c.control)) {
                rows.push(ImprovementRow {
                    comparison: *c,
                    values: relative_improvement(t, b)?,
                });
            }
        }
        Ok(rows)
    };
    let improvements_vs_random = improvements(0..3)?;
    let improvements_of_optimal = improvements(3..6)?;

    let mut effective_sizes = Vec::new();
    for (&m, curve) in &curves {
        if curve.len() < 2 {
            break;
        }
        for &t in &config.thresholds {
            effective_sizes.push(EffectiveSizeRow {
                method: m,
                threshold: t,
                size: effective_set_size(curve, t)?.size(),
            });
        }
    }

    let mut avg_time = BTreeMap::new();
    for m in METHODS {
        if units.iter().all(|u| u.times.contains_key(&m)) && !units.is_empty() {
            avg_time.insert(m, mean(units.iter().map(|u| u.times[&m])));
        }
    }
    let mut reductions = BTreeMap::new();
    if let Some(&base) = avg_time.get(&Method::Random) {
        for (&m, &t) in &avg_time {
            if m != Method::Random {
                if let Ok(r) = time_reduction(t, base) {
                    reductions.insert(m, r);
                }
            }
        }
    }

    let mut tests = Vec::new();
    if units.len() >= 2 {
        for (ci, c) in COMPARISONS.iter().enumerate() {
            if !(curves.contains_key(&c.treatment) && curves.contains_key(&c.control)) {
                continue;
            }
            let len = curves[&c.treatment].len();
            for m in 1..=len {
                let treatment: Vec<f64> =
                    units.iter().map(|u| u.curves[&c.treatment].at(m)).collect();
                let control: Vec<f64> = units.iter().map(|u| u.curves[&c.control].at(m)).collect();
                let sample = PairedSample::from_columns(c.label(), &treatment, &control)?;
                let cfg = PermutationConfig {
                    alternative: Alternative::Greater,
                    max_exact_n: config.max_exact_n,
                    resamples: config.resamples,
                    seed: derive_seed(test_seed, (ci * 10_000 + m) as u64),
                };
                let r = paired_permutation_test(&sample, &cfg)?;
                tests.push(TestRow {
                    comparison: *c,
                    set_size: m,
                    p_value: r.p_value,
                    n: r.n,
                    mode: r.mode,
                    significant: significance_flag(r.p_value, config.alpha),
                });
            }
        }
    }

    Ok(Summary {
        curves,
        not_computed,
        improvements_vs_random,
        improvements_of_optimal,
        effective_sizes,
        avg_time,
        time_reduction: reductions,
        tests,
        alpha: config.alpha,
    })
}

fn run_one(
    index: usize,
    run: &RunConfig,
    config: &ExperimentConfig,
) -> Result<RunReport, RunError> {
    let synthetic = run.prioritizing.synthetic.is_some() && run.validation.synthetic.is_some();
    if run.replicates > 1 && !synthetic {
        return Err(RunError::InvalidRun(
            "replicates > 1 needs synthetic prioritizing and validation datasets".into(),
        ));
    }
    let run_seed = derive_seed(config.seed, index as u64);
    let mut units = Vec::with_capacity(run.replicates);
    let mut records = Vec::new();
    let mut random_seeds = Vec::new();
    let mut first: Option<Inputs> = None;
    for r in 0..run.replicates {
        let inputs = load_inputs(run, r)?;
        let (unit, rs) = evaluate_replicate(
            &inputs,
            config,
            derive_seed(run_seed, r as u64),
            r,
            &mut records,
        )?;
        units.push(unit);
        random_seeds.push(rs);
        first.get_or_insert(inputs);
    }
    let first = first.expect("at least one replicate");
    let summary = summarize(&units, config, derive_seed(run_seed, u64::MAX))?;
    let report = RunReport {
        index,
        label: run
            .label
            .clone()
            .unwrap_or_else(|| format!("{}->{}", first.fp.meta.label, first.fv.meta.label)),
        num_mrs: first.fv.matrix.num_mrs(),
        num_validation_faults: first.fv.matrix.num_faults(),
        replicates: run.replicates,
        summary,
        provenance: Provenance {
            tool_version: TOOL_VERSION.to_string(),
            config_seed: config.seed,
            run_seed,
            random_n: config.random_n,
            denominator: config.denominator,
            prioritizing: first.fp.meta,
            validation: first.fv.meta,
            random_seeds,
            orderings: records,
        },
    };
    Ok(report)
}

/// Runs every configured evaluation, then the cross-run aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    if config.runs.is_empty() {
        return Err(ExperimentError::EmptyConfig);
    }
    config.validate()?;

    let mut runs = Vec::with_capacity(config.runs.len());
    let mut run_units = Vec::with_capacity(config.runs.len());
    for (index, run) in config.runs.iter().enumerate() {
        let wrap = |source| ExperimentError::Run {
            index,
            label: run
                .label
                .clone()
                .unwrap_or_else(|| run.validation.label.clone()),
            source,
        };
        let report = run_one(index, run, config).map_err(wrap)?;
        // a run contributes its replicate-mean curves and times
        run_units.push(UnitResult {
            curves: report.summary.curves.clone(),
            times: report.summary.avg_time.clone(),
        });
        runs.push(report);
    }

    let num_mrs = runs[0].num_mrs;
    let aggregate = if runs.iter().all(|r| r.num_mrs == num_mrs) {
        let summary = summarize(&run_units, config, derive_seed(config.seed, u64::MAX)).map_err(
            |source| ExperimentError::Run {
                index: usize::MAX,
                label: "aggregate".into(),
                source,
            },
        )?;
        Some(AggregateReport {
            runs: runs.len(),
            num_mrs,
            summary,
        })
    } else {
        None
    };
    Ok(ExperimentReport { runs, aggregate })
}

/// Percent formatting used in display columns.
pub(crate) fn display_percent(v: f64, decimals: usize) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "+inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.decimals$}%")
    }
}
