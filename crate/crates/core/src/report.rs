//! Writes experiment reports as plot-ready tables.
//!
//! CSV layout in the output directory, per run `NN` (zero-padded index):
//!
//! - `run_NN_curves.csv`: `set_size,method,value,display`
//! - `run_NN_summary.csv`: `metric,method,baseline,parameter,value,display,n,significant`
//! - `run_NN_orderings.csv`: `replicate,method,seed,position,mr`
//!
//! plus `aggregate_curves.csv` and `aggregate_summary.csv` when the runs
//! share an MR count. The JSON format writes `run_NN.json` and
//! `aggregate.json` instead. Values are written at full precision; the
//! `display` column is rounded for reading only.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::experiment::{display_percent, ExperimentReport, RunReport, Summary};
use crate::formats::{csv_writer, finish_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary sibling and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), ReportError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn curves_table(summary: &Summary) -> String {
    let mut w = csv_writer();
    w.write_record(["set_size", "method", "value", "display"])
        .expect("in-memory write");
    for (method, curve) in &summary.curves {
        for (i, &v) in curve.values().iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                method.to_string(),
                num(v),
                format!("{v:.2}"),
            ])
            .expect("in-memory write");
        }
    }
    finish_csv(w)
}

pub fn summary_table(summary: &Summary) -> String {
    let mut w = csv_writer();
    w.write_record([
        "metric",
        "method",
        "baseline",
        "parameter",
        "value",
        "display",
        "n",
        "significant",
    ])
    .expect("in-memory write");
    let mut row = |cells: [String; 8]| w.write_record(&cells).expect("in-memory write");
    let s = String::new;

    for m in &summary.not_computed {
        row([
            "status".into(),
            m.to_string(),
            s(),
            s(),
            "not_computed".into(),
            "not computed".into(),
            s(),
            s(),
        ]);
    }
    for r in summary
        .improvements_vs_random
        .iter()
        .chain(&summary.improvements_of_optimal)
    {
        for (i, &v) in r.values.iter().enumerate() {
            let star =
                summary
                    .test(r.comparison, i + 1)
                    .map_or("", |t| if t.significant { "*" } else { "" });
            row([
                "relative_improvement".into(),
                r.comparison.treatment.to_string(),
                r.comparison.control.to_string(),
                (i + 1).to_string(),
                num(v),
                format!("{}{star}", display_percent(v, 2)),
                s(),
                s(),
            ]);
        }
    }
    for e in &summary.effective_sizes {
        let (value, display) = match e.size {
            Some(m) => (m.to_string(), m.to_string()),
            None => ("not_met".to_string(), "not met".to_string()),
        };
        row([
            "effective_set_size".into(),
            e.method.to_string(),
            s(),
            num(e.threshold),
            value,
            display,
            s(),
            s(),
        ]);
    }
    for (m, &t) in &summary.avg_time {
        row([
            "avg_time_to_detect".into(),
            m.to_string(),
            s(),
            s(),
            num(t),
            format!("{t:.0}s"),
            s(),
            s(),
        ]);
    }
    for (m, &r) in &summary.time_reduction {
        row([
            "time_reduction".into(),
            m.to_string(),
            "random".into(),
            s(),
            num(r),
            display_percent(r, 0),
            s(),
            s(),
        ]);
    }
    for t in &summary.tests {
        row([
            "p_value".into(),
            t.comparison.treatment.to_string(),
            t.comparison.control.to_string(),
            t.set_size.to_string(),
            num(t.p_value),
            format!("{:.4}", t.p_value),
            t.n.to_string(),
            t.significant.to_string(),
        ]);
    }
    finish_csv(w)
}

pub fn orderings_table(run: &RunReport) -> String {
    let mut w = csv_writer();
    w.write_record(["replicate", "method", "seed", "position", "mr"])
        .expect("in-memory write");
    for o in &run.provenance.orderings {
        for (pos, mr) in o.order.iter().enumerate() {
            w.write_record([
                o.replicate.to_string(),
                o.method.to_string(),
                o.seed.to_string(),
                (pos + 1).to_string(),
                mr.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish_csv(w)
}

fn json(value: &impl serde::Serialize) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes every table for `report` into `out_dir` and returns the paths in
/// write order. An experiment without runs writes nothing.
pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    if report.runs.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut files: Vec<(String, String)> = Vec::new();
    for run in &report.runs {
        let stem = format!("run_{:02}", run.index);
        match format {
            ReportFormat::Csv => {
                files.push((format!("{stem}_curves.csv"), curves_table(&run.summary)));
                files.push((format!("{stem}_summary.csv"), summary_table(&run.summary)));
                files.push((format!("{stem}_orderings.csv"), orderings_table(run)));
            }
            ReportFormat::Json => files.push((format!("{stem}.json"), json(run)?)),
        }
    }
    if let Some(agg) = &report.aggregate {
        match format {
            ReportFormat::Csv => {
                files.push(("aggregate_curves.csv".into(), curves_table(&agg.summary)));
                files.push(("aggregate_summary.csv".into(), summary_table(&agg.summary)));
            }
            ReportFormat::Json => files.push(("aggregate.json".into(), json(agg)?)),
        }
    }

    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = out_dir.join(name);
        write_atomic(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_experiment;
    use crate::formats::{DatasetSource, ExperimentConfig, RunConfig};
    use crate::model::Method;
    use crate::synth::SynthSpec;
    use std::collections::BTreeMap;

    fn config() -> ExperimentConfig {
        let src = |label: &str, seed| DatasetSource {
            path: None,
            synthetic: Some(SynthSpec {
                num_mrs: 5,
                num_faults: 40,
                kill_rate_mean: 0.2,
                kill_rate_sd: 0.15,
                overlap_bias: 0.3,
                seed,
                rate_seed: Some(11),
            }),
            label: label.into(),
            test_suite_label: String::new(),
            fault_tool_label: String::new(),
            drop_all_false: false,
            duplicate_faults: vec![],
        };
        let run = |i| RunConfig {
            label: Some(format!("r{i}")),
            prioritizing: src("p", i),
            validation: src("v", 100 + i),
            coverage: None,
            costs: None,
            synthetic_costs: None,
            replicates: 3,
        };
        ExperimentConfig::new(vec![run(0), run(1)], 5)
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("never");
        let empty = ExperimentReport {
            runs: vec![],
            aggregate: None,
        };
        assert!(emit_report(&empty, ReportFormat::Csv, &out)
            .unwrap()
            .is_empty());
        assert!(!out.exists());
    }

    #[test]
    fn curve_table_round_trips() {
        let rep = run_experiment(&config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&rep, ReportFormat::Csv, dir.path()).unwrap();
        assert_eq!(files.len(), 3 * 2 + 2);

        let text = fs::read_to_string(dir.path().join("run_01_curves.csv")).unwrap();
        let mut parsed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let m: usize = rec[0].parse().unwrap();
            let v = parsed.entry(rec[1].to_string()).or_default();
            assert_eq!(v.len() + 1, m);
            v.push(rec[2].parse().unwrap());
        }
        let curves = &rep.runs[1].summary.curves;
        assert_eq!(parsed.len(), curves.len());
        for (m, c) in curves {
            assert_eq!(parsed[m.as_str()], c.values());
        }

        let summary = fs::read_to_string(dir.path().join("run_01_summary.csv")).unwrap();
        assert!(
            summary.starts_with("metric,method,baseline,parameter,value,display,n,significant\n")
        );
        assert!(summary.contains("status,statement_coverage,,,not_computed,not computed,,\n"));
        assert!(summary.contains("p_value,fault_based,random,1,"));
        assert!(!summary.contains('\r'));
    }

    #[test]
    fn overwrite_in_place_and_json() {
        let rep = run_experiment(&config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run_00_curves.csv"), "stale").unwrap();
        emit_report(&rep, ReportFormat::Csv, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("run_00_curves.csv")).unwrap();
        assert!(text.starts_with("set_size,method,value,display\n"));
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());

        let files = emit_report(&rep, ReportFormat::Json, dir.path()).unwrap();
        let names: Vec<_> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["run_00.json", "run_01.json", "aggregate.json"]);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        let fb = &v["curves"]["fault_based"];
        assert_eq!(
            fb.as_array().unwrap().len(),
            rep.runs[0].summary.curves[&Method::FaultBased].len()
        );
        assert_eq!(v["provenance"]["config_seed"], 5);
    }
}
