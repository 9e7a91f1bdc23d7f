//! pass@k, repair rates per error type, per-turn success curves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CodeErrorSet;
use crate::repair::Trajectory;
use crate::sandbox::ErrorType;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("pass@k needs 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")]
    Domain { n: usize, c: usize, k: usize },
    #[error("no trajectories to aggregate")]
    Empty,
    #[error("task ids without a partner: trajectories only [{}], entries only [{}]", .trajectories.join(", "), .entries.join(", "))]
    Orphans { trajectories: Vec<String>, entries: Vec<String> },
}

/// Unbiased pass@k estimate from `n` samples of which `c` are correct,
/// evaluated as a product so large `n` cannot overflow.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, MetricsError> {
    if c > n || k == 0 || k > n {
        return Err(MetricsError::Domain { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairCount {
    pub repaired: usize,
    pub total: usize,
}

impl RepairCount {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.repaired as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: usize,
    pub samples: usize,
    pub pass_at: BTreeMap<usize, f64>,
    pub repaired_by_type: BTreeMap<ErrorType, RepairCount>,
    /// Entry `t`: fraction of samples passing within at most `t` repair turns.
    pub per_turn_pass: Vec<f64>,
    pub total_model_calls: usize,
    pub aborted: usize,
}

/// Trajectories sharing a task_id are treated as samples of that task.
/// With `entries`, every trajectory must have an entry and vice versa.
pub fn aggregate(trajectories: &[Trajectory], entries: Option<&CodeErrorSet>) -> Result<EvalReport, MetricsError> {
    if trajectories.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_task: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for t in trajectories {
        let slot = by_task.entry(t.task_id.as_str()).or_default();
        slot.0 += 1;
        slot.1 += usize::from(t.passed());
    }

    let min_n = by_task.values().map(|(n, _)| *n).min().expect("non-empty");
    let mut pass_at = BTreeMap::new();
    for k in 1..=min_n {
        let mut sum = 0.0;
        for &(n, c) in by_task.values() {
            sum += pass_at_k(n, c, k)?;
        }
        pass_at.insert(k, sum / by_task.len() as f64);
    }

    let mut repaired_by_type = BTreeMap::new();
    if let Some(set) = entries {
        let entry_ids: BTreeSet<&str> = set.entries.iter().map(|e| e.task.task_id.as_str()).collect();
        let traj_only: Vec<String> =
            by_task.keys().filter(|id| !entry_ids.contains(*id)).map(|s| s.to_string()).collect();
        let entry_only: Vec<String> =
            entry_ids.iter().filter(|id| !by_task.contains_key(*id)).map(|s| s.to_string()).collect();
        if !traj_only.is_empty() || !entry_only.is_empty() {
            return Err(MetricsError::Orphans { trajectories: traj_only, entries: entry_only });
        }
        for e in &set.entries {
            let (n, c) = by_task[e.task.task_id.as_str()];
            let slot: &mut RepairCount = repaired_by_type
                .entry(e.error.error_type)
                .or_insert(RepairCount { repaired: 0, total: 0 });
            slot.total += n;
            slot.repaired += c;
        }
    }

    let horizon = trajectories.iter().map(Trajectory::repair_turns).max().unwrap_or(0);
    let samples = trajectories.len();
    let per_turn_pass = (0..=horizon)
        .map(|t| {
            let hits = trajectories.iter().filter(|x| x.passed_at_turn().is_some_and(|p| p <= t)).count();
            hits as f64 / samples as f64
        })
        .collect();

    Ok(EvalReport {
        tasks: by_task.len(),
        samples,
        pass_at,
        repaired_by_type,
        per_turn_pass,
        total_model_calls: trajectories.iter().map(|t| t.model_calls).sum(),
        aborted: trajectories.iter().filter(|t| t.aborted()).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    PlainTable,
    Json,
    Csv,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::PlainTable, ReportFormat::Json, ReportFormat::Csv];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::PlainTable => "report.txt",
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" | "txt" | "plain" => Ok(ReportFormat::PlainTable),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

pub const CSV_HEADER: &str = "error_type,repaired,total,rate";

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
            for (ty, rc) in &report.repaired_by_type {
                w.write_record([
                    ty.name().to_string(),
                    rc.repaired.to_string(),
                    rc.total.to_string(),
                    format!("{:.4}", rc.rate()),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
        }
        ReportFormat::PlainTable => plain_table(report),
    }
}

fn plain_table(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "tasks: {}  samples: {}  model calls: {}  aborted: {}", r.tasks, r.samples, r.total_model_calls, r.aborted);
    for (k, v) in &r.pass_at {
        let _ = writeln!(s, "pass@{k}: {:.4}", v);
    }
    let curve: Vec<String> = r.per_turn_pass.iter().map(|v| format!("{v:.4}")).collect();
    let _ = writeln!(s, "pass within turns 0..{}: {}", r.per_turn_pass.len().saturating_sub(1), curve.join(" "));
    s.push('\n');
    let _ = writeln!(s, "{:<16} {:>8} {:>8} {:>8}", "error_type", "repaired", "total", "rate");
    for (ty, rc) in &r.repaired_by_type {
        let _ = writeln!(s, "{:<16} {:>8} {:>8} {:>8.4}", ty.name(), rc.repaired, rc.total, rc.rate());
    }
    s
}

/// Writes `report.json`, `report.csv` and `report.txt` into `dir`.
pub fn write_reports(report: &EvalReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    ReportFormat::ALL
        .into_iter()
        .map(|f| {
            let path = dir.join(f.file_name());
            fs::write(&path, render_report(report, f)).map(|_| path)
        })
        .collect()
}
