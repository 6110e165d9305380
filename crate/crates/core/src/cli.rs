//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 internal
//! error. Standard output carries data only.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::experiment::{display_percent, run_experiment, Comparison, ExperimentError};
use crate::formats::{self, FormatError};
use crate::metrics::Denominator;
use crate::model::{CoverageCriterion, Method};
use crate::prioritize::{self, PrioritizeError};
use crate::report::{emit_report, ReportError, ReportFormat};
use crate::stats::{self, PairedSample, PermutationConfig, StatsError, TestMode};
use crate::synth::{self, SynthError, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mrprio",
    version,
    about = "Prioritize and evaluate metamorphic relations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a greedy MR ordering, one MR per line.
    Prioritize(PrioritizeArgs),
    /// Run an experiment config and write report tables.
    Evaluate(EvaluateArgs),
    /// Write a synthetic kill matrix.
    Synth(SynthArgs),
    /// One-sided paired permutation test on a treatment,control file.
    Permtest(PermtestArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["kills", "coverage"]))]
pub struct PrioritizeArgs {
    /// Kill matrix CSV of the prioritizing fault set.
    #[arg(long, value_name = "PATH")]
    pub kills: Option<PathBuf>,
    /// Coverage JSON.
    #[arg(long, value_name = "PATH", requires = "criterion")]
    pub coverage: Option<PathBuf>,
    #[arg(long, value_enum, requires = "coverage")]
    pub criterion: Option<Criterion>,
    #[arg(long)]
    pub seed: u64,
    /// Print only the first N MRs.
    #[arg(long, value_name = "N")]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Criterion {
    Statement,
    Branch,
}

impl From<Criterion> for CoverageCriterion {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::Statement => CoverageCriterion::Statement,
            Criterion::Branch => CoverageCriterion::Branch,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: ReportFormat,
    /// Percentages over killable faults instead of all faults.
    #[arg(long)]
    pub killable_only: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synthetic spec; replaces the inline flags.
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub mrs: Option<usize>,
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub faults: Option<usize>,
    /// Mean per-MR kill rate.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub mean: Option<f64>,
    /// Standard deviation of per-MR kill rates.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub sd: Option<f64>,
    #[arg(long, conflicts_with = "spec", default_value_t = 0.0)]
    pub overlap: f64,
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub seed: Option<u64>,
    /// Seed for kill rates alone, shared by matrices of the same MRs.
    #[arg(long, conflicts_with = "spec")]
    pub rate_seed: Option<u64>,
    /// Kill matrix output path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Also write per-MR costs here.
    #[arg(long, value_name = "PATH", requires = "cost_mean")]
    pub costs_out: Option<PathBuf>,
    #[arg(long, requires = "costs_out")]
    pub cost_mean: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub cost_sd: f64,
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    /// CSV with header `treatment,control`.
    #[arg(long, value_name = "PATH")]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub seed: u64,
    /// Largest sample enumerated exactly.
    #[arg(long, default_value_t = 20)]
    pub max_exact: usize,
    /// Random sign flips beyond `max_exact`.
    #[arg(long, default_value_t = 100_000)]
    pub resamples: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),

    #[error(transparent)]
    Stats(#[from] StatsError),

    #[error(transparent)]
    Experiment(#[from] ExperimentError),

    #[error(transparent)]
    Report(#[from] ReportError),

    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Prioritize(a) => cmd_prioritize(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out, err),
        Command::Synth(a) => cmd_synth(a),
        Command::Permtest(a) => cmd_permtest(a, out),
    }
}

fn cmd_prioritize(a: PrioritizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (ordering, _) = match (&a.kills, &a.coverage, a.criterion) {
        (Some(kills), None, None) => {
            prioritize::fault_based_order(&formats::parse_kill_matrix(kills)?, a.seed)?
        }
        (None, Some(cov), Some(c)) => {
            prioritize::coverage_based_order(&formats::parse_coverage(cov)?, c.into(), a.seed)?
        }
        _ => {
            return Err(CliError::Usage(
                "give --kills, or --coverage with --criterion".into(),
            ))
        }
    };
    let shown = ordering.top(a.top.unwrap_or(ordering.len()));
    for mr in shown {
        writeln!(out, "{mr}")?;
    }
    writeln!(out, "# method={} seed={}", ordering.method, a.seed)?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut config = formats::parse_config(&a.config)?;
    if a.killable_only {
        config.denominator = Denominator::Killable;
    }
    let report = run_experiment(&config)?;
    let files = emit_report(&report, a.format, &a.out)?;

    let headline = Comparison {
        treatment: Method::FaultBased,
        control: Method::Random,
    };
    for run in &report.runs {
        let ri = run
            .summary
            .improvement(headline)
            .and_then(|r| r.values.first())
            .map_or_else(|| "n/a".to_string(), |&v| display_percent(v, 2));
        writeln!(
            out,
            "run_{:02} {} mrs={} faults={} replicates={} {}@1={}",
            run.index,
            run.label,
            run.num_mrs,
            run.num_validation_faults,
            run.replicates,
            headline.label(),
            ri
        )?;
    }
    let _ = writeln!(err, "wrote {} files to {}", files.len(), a.out.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str::<SynthSpec>(&text).map_err(FormatError::from)?
        }
        None => SynthSpec {
            num_mrs: a.mrs.expect("required by clap"),
            num_faults: a.faults.expect("required by clap"),
            kill_rate_mean: a.mean.expect("required by clap"),
            kill_rate_sd: a.sd.expect("required by clap"),
            overlap_bias: a.overlap,
            seed: a.seed.expect("required by clap"),
            rate_seed: a.rate_seed,
        },
    };
    let generated = synth::gen_kill_matrix(&spec)?;
    if let (Some(path), Some(mean)) = (&a.costs_out, a.cost_mean) {
        let costs = synth::gen_costs(generated.matrix.mrs(), mean, a.cost_sd, spec.seed)?;
        formats::write_costs(&costs, path)?;
    }
    formats::write_kill_matrix(&generated.matrix, &a.out)?;
    Ok(())
}

fn cmd_permtest(a: PermtestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha {} outside (0, 1]",
            a.alpha
        )));
    }
    let pairs = formats::parse_pairs(&a.pairs)?;
    let sample = PairedSample::new(a.pairs.display().to_string(), pairs)?;
    let config = PermutationConfig {
        max_exact_n: a.max_exact,
        resamples: a.resamples,
        ..PermutationConfig::new(a.seed)
    };
    let r = stats::paired_permutation_test(&sample, &config)?;
    let mode = match r.mode {
        TestMode::Exact => "exact",
        TestMode::MonteCarlo => "monte_carlo",
    };
    writeln!(
        out,
        "p={:?} significant={}",
        r.p_value,
        stats::significance_flag(r.p_value, a.alpha)
    )?;
    writeln!(
        out,
        "# n={} mode={mode} mean_difference={:?}",
        r.n, r.statistic
    )?;
    Ok(())
}
