//! Report files: one `key=value` file per run, an aggregate summary table and
//! wall-clock timings.
//!
//! Per-run files hold only deterministic fields, so identical runs produce
//! byte-identical files. Timings go to `timings.csv`. Missing values are
//! written as `N/A`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{RunOutcome, RunReport, RunResult};

pub const NA: &str = "N/A";

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn list(v: &[f64]) -> String {
    if v.is_empty() {
        NA.to_string()
    } else {
        v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
    }
}

/// Ordered fields of one run.
pub fn run_fields(report: &RunReport, run: &RunOutcome) -> Vec<(&'static str, String)> {
    let mut f = vec![
        ("dataset", report.dataset.clone()),
        ("mode", report.mode.to_string()),
        ("variant", report.variant.to_string()),
        ("seed", run.seed().to_string()),
    ];
    match run {
        RunOutcome::Ok(r) => {
            let i = &r.instrumentation;
            f.extend([
                ("status", "ok".to_string()),
                ("final_ari", num(Some(r.final_ari))),
                ("final_ami", num(Some(r.final_ami))),
                ("avg_inc_ari", num(r.avg_inc_ari)),
                ("avg_inc_ami", num(r.avg_inc_ami)),
                ("bwt_ari", num(r.bwt_ari)),
                ("bwt_ami", num(r.bwt_ami)),
                ("stage_ari", list(&r.stage_ari)),
                ("stage_ami", list(&r.stage_ami)),
                ("node_count", r.node_count.to_string()),
                ("cluster_count", r.cluster_count.to_string()),
                ("recalculations", i.recalculations.to_string()),
                ("midstream_rebuilds", i.midstream_rebuilds.to_string()),
                ("final_builds", i.final_builds.to_string()),
                ("isolated_filtered", i.isolated_filtered.to_string()),
                ("zeta_component_lookups", i.zeta_component_lookups.to_string()),
                ("deleted_nodes", i.deleted_nodes.to_string()),
            ]);
        }
        RunOutcome::Failed { error, .. } => {
            f.push(("status", "failed".to_string()));
            for key in [
                "final_ari",
                "final_ami",
                "avg_inc_ari",
                "avg_inc_ami",
                "bwt_ari",
                "bwt_ami",
                "stage_ari",
                "stage_ami",
                "node_count",
                "cluster_count",
            ] {
                f.push((key, NA.to_string()));
            }
            f.push(("error", error.replace('\n', " ")));
        }
    }
    f
}

pub fn run_file_name(report: &RunReport, seed: u64) -> String {
    format!("{}__{}__{}__seed{}.txt", report.dataset, report.mode, report.variant, seed)
}

type Metric = (&'static str, fn(&RunResult) -> Option<f64>);

const SUMMARY_METRICS: [Metric; 9] = [
    ("final_ari", |r| Some(r.final_ari)),
    ("final_ami", |r| Some(r.final_ami)),
    ("avg_inc_ari", |r| r.avg_inc_ari),
    ("avg_inc_ami", |r| r.avg_inc_ami),
    ("bwt_ari", |r| r.bwt_ari),
    ("bwt_ami", |r| r.bwt_ami),
    ("node_count", |r| Some(r.node_count as f64)),
    ("cluster_count", |r| Some(r.cluster_count as f64)),
    ("wall_time_s", |r| Some(r.wall_time_s)),
];

/// Mean and sample standard deviation; the deviation needs two values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

pub fn summary_table(report: &RunReport) -> String {
    let mut header = vec!["dataset", "mode", "variant", "runs", "failed"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    let mut row = vec![
        report.dataset.clone(),
        report.mode.to_string(),
        report.variant.to_string(),
        report.runs.len().to_string(),
        report.failures().to_string(),
    ];
    for (name, get) in SUMMARY_METRICS {
        let values: Vec<f64> = report.successes().filter_map(get).collect();
        let (mean, std) = mean_std(&values);
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
        row.push(num(mean));
        row.push(num(std));
    }
    format!("{}\n{}\n", header.join(","), row.join(","))
}

/// Write `runs/*.txt`, `summary.csv` and `timings.csv` under `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let mut written = Vec::new();
    let mut timings = String::from("dataset,mode,variant,seed,wall_time_s\n");
    for run in &report.runs {
        let mut text = String::new();
        for (k, v) in run_fields(report, run) {
            let _ = writeln!(text, "{k}={v}");
        }
        let path = runs_dir.join(run_file_name(report, run.seed()));
        fs::write(&path, text)?;
        written.push(path);
        let wall = run.result().map(|r| r.wall_time_s);
        let _ = writeln!(
            timings,
            "{},{},{},{},{}",
            report.dataset,
            report.mode,
            report.variant,
            run.seed(),
            num(wall)
        );
    }
    let summary = dir.join("summary.csv");
    fs::write(&summary, summary_table(report))?;
    written.push(summary);
    let timing_path = dir.join("timings.csv");
    fs::write(&timing_path, timings)?;
    written.push(timing_path);
    Ok(written)
}

/// Fields of a per-run file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub fields: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    /// Numeric field; `None` for `N/A` or a missing key.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.get(key).filter(|v| *v != NA).and_then(|v| v.parse().ok())
    }

    pub fn numbers(&self, key: &str) -> Vec<f64> {
        match self.get(key) {
            Some(v) if v != NA => v.split(';').filter_map(|t| t.parse().ok()).collect(),
            _ => Vec::new(),
        }
    }
}

pub fn read_run_file(path: &Path) -> io::Result<RunRecord> {
    let text = fs::read_to_string(path)?;
    let fields = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(RunRecord { fields })
}
