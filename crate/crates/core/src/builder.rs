//! Turning failing generations into a repair benchmark, and summarizing one.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Category, CodeErrorEntry, CodeErrorSet, ErrorMessage, Provenance, TaskSet};
use crate::pool::map_ordered;
use crate::sandbox::{ErrorType, Executor, Verdict};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("candidate for unknown task_id '{0}'")]
    UnknownTask(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    BadCandidate { path: PathBuf, line: usize, message: String },
}

/// One generated program for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub task_id: String,
    pub code: String,
}

impl Candidate {
    pub fn new(task_id: impl Into<String>, code: impl Into<String>) -> Self {
        Self { task_id: task_id.into(), code: code.into() }
    }
}

/// Reads candidates from JSONL, one `{"task_id": .., "code": ..}` per line.
pub fn load_candidates(path: &Path) -> Result<Vec<Candidate>, BuildError> {
    let text = fs::read_to_string(path).map_err(|source| BuildError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BuildError::BadCandidate {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub set: CodeErrorSet,
    pub passed: usize,
    pub runner_errors: usize,
    /// Candidates identical to an earlier one for the same task.
    pub duplicates: usize,
}

/// Executes every candidate and keeps the failing ones (including timeouts)
/// as benchmark entries. When one task yields several distinct failing
/// programs, later entries get ids `<task_id>#2`, `#3`, ...
pub fn build_code_error(
    tasks: &TaskSet,
    candidates: &[Candidate],
    executor: &dyn Executor,
    parallelism: usize,
) -> Result<BuildOutcome, BuildError> {
    if let Some(c) = candidates.iter().find(|c| tasks.get(&c.task_id).is_none()) {
        return Err(BuildError::UnknownTask(c.task_id.clone()));
    }
    let mut seen = HashSet::new();
    let unique: Vec<&Candidate> = candidates.iter().filter(|c| seen.insert((&c.task_id, &c.code))).collect();
    let duplicates = candidates.len() - unique.len();

    let reports = map_ordered(&unique, parallelism.max(1), |_, c| {
        let task = tasks.get(&c.task_id).expect("checked above");
        executor.execute(&c.code, &task.tests)
    });

    let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut passed, mut runner_errors) = (0, 0);
    let mut entries = Vec::new();
    for (c, report) in unique.iter().zip(reports) {
        match report.verdict {
            Verdict::Passed => passed += 1,
            Verdict::RunnerError => {
                runner_errors += 1;
                log::warn!("{}: runner error, candidate skipped: {:?}", c.task_id, report.error.map(|e| e.description));
            }
            Verdict::Failed | Verdict::Timeout => {
                let mut task = tasks.get(&c.task_id).expect("checked above").clone();
                let n = per_task.entry(c.task_id.as_str()).or_insert(0);
                *n += 1;
                if *n > 1 {
                    task.task_id = format!("{}#{}", c.task_id, n);
                }
                let error = report
                    .error
                    .unwrap_or_else(|| ErrorMessage::new(ErrorType::Other, "failed without diagnostic"));
                entries.push(CodeErrorEntry {
                    task,
                    buggy_code: c.code.clone(),
                    error,
                    provenance: Provenance::ModelGenerated,
                });
            }
        }
    }
    Ok(BuildOutcome { set: CodeErrorSet { entries }, passed, runner_errors, duplicates })
}

/// Error columns of the statistics table. Types outside this list are
/// counted under "Other Errors".
pub const STATS_COLUMNS: [ErrorType; 6] = [
    ErrorType::AssertionError,
    ErrorType::NameError,
    ErrorType::TypeError,
    ErrorType::IndexError,
    ErrorType::ValueError,
    ErrorType::SyntaxError,
];

fn stats_bucket(t: ErrorType) -> Option<ErrorType> {
    STATS_COLUMNS.contains(&t).then_some(t)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsRow {
    pub problems: usize,
    /// Exact counts per error type (no folding).
    pub by_type: BTreeMap<ErrorType, usize>,
    pub words: usize,
    pub code_lines: usize,
    pub tests: usize,
}

impl StatsRow {
    fn add(&mut self, e: &CodeErrorEntry) {
        self.problems += 1;
        *self.by_type.entry(e.error.error_type).or_insert(0) += 1;
        self.words += e.task.word_count();
        self.code_lines += e.buggy_code.lines().filter(|l| !l.trim().is_empty()).count();
        self.tests += e.task.tests.len();
    }

    fn merge(&mut self, other: &StatsRow) {
        self.problems += other.problems;
        for (t, n) in &other.by_type {
            *self.by_type.entry(*t).or_insert(0) += n;
        }
        self.words += other.words;
        self.code_lines += other.code_lines;
        self.tests += other.tests;
    }

    /// Count in a table column; `None` is the "Other Errors" column.
    pub fn column(&self, bucket: Option<ErrorType>) -> usize {
        self.by_type.iter().filter(|(t, _)| stats_bucket(**t) == bucket).map(|(_, n)| n).sum()
    }

    fn avg(&self, sum: usize) -> f64 {
        if self.problems == 0 {
            0.0
        } else {
            sum as f64 / self.problems as f64
        }
    }

    pub fn avg_words(&self) -> f64 {
        self.avg(self.words)
    }

    pub fn avg_code_lines(&self) -> f64 {
        self.avg(self.code_lines)
    }

    pub fn avg_tests(&self) -> f64 {
        self.avg(self.tests)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub rows: BTreeMap<Category, StatsRow>,
    pub total: StatsRow,
}

pub fn stats(set: &CodeErrorSet) -> StatsTable {
    let mut rows: BTreeMap<Category, StatsRow> = Category::ALL.into_iter().map(|c| (c, StatsRow::default())).collect();
    for e in &set.entries {
        rows.get_mut(&e.task.category).expect("all categories present").add(e);
    }
    let mut total = StatsRow::default();
    for r in rows.values() {
        total.merge(r);
    }
    StatsTable { rows, total }
}

fn column_label(bucket: Option<ErrorType>) -> &'static str {
    bucket.map_or("Other Errors", ErrorType::name)
}

fn buckets() -> impl Iterator<Item = Option<ErrorType>> {
    STATS_COLUMNS.into_iter().map(Some).chain(std::iter::once(None))
}

impl StatsTable {
    fn columns(&self) -> Vec<&StatsRow> {
        self.rows.values().chain(std::iter::once(&self.total)).collect()
    }

    /// Row label followed by one cell per category and the total, plus the
    /// share of all problems for error rows.
    fn lines(&self) -> Vec<Vec<String>> {
        let cols = self.columns();
        let mut out = Vec::new();
        let mut header = vec![String::new()];
        header.extend(self.rows.keys().map(|c| c.as_str().to_string()));
        header.push("total".into());
        header.push("share_pct".into());
        out.push(header);

        let mut problem = vec!["Problem".to_string()];
        problem.extend(cols.iter().map(|r| r.problems.to_string()));
        problem.push(String::new());
        out.push(problem);

        for b in buckets() {
            let mut row = vec![column_label(b).to_string()];
            row.extend(cols.iter().map(|r| r.column(b).to_string()));
            let share = if self.total.problems == 0 {
                0.0
            } else {
                100.0 * self.total.column(b) as f64 / self.total.problems as f64
            };
            row.push(format!("{share:.1}"));
            out.push(row);
        }
        type Avg = fn(&StatsRow) -> f64;
        let avgs: [(&str, Avg); 3] = [
            ("Avg. Problem Words", StatsRow::avg_words),
            ("Avg. Buggy Code", StatsRow::avg_code_lines),
            ("Avg. Test Cases", StatsRow::avg_tests),
        ];
        for (label, f) in avgs {
            let mut row = vec![label.to_string()];
            row.extend(cols.iter().map(|r| format!("{:.1}", f(r))));
            row.push(String::new());
            out.push(row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for mut row in self.lines() {
            if row[0].is_empty() {
                row[0] = "row".into();
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_table(&self) -> String {
        let lines = self.lines();
        let mut s = String::new();
        for row in lines {
            let _ = write!(s, "{:<20}", row[0]);
            for cell in &row[1..] {
                let _ = write!(s, " {cell:>9}");
            }
            s.truncate(s.trim_end().len());
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_csv())
    }
}
