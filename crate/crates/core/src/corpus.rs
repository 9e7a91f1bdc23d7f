//! Generation tasks, repair benchmark entries and their JSONL formats.
//!
//! Three task sources are understood:
//!
//! | format           | fields read                                   |
//! |------------------|-----------------------------------------------|
//! | `HumanEvalJsonl` | `task_id`, `prompt`, `test`, `entry_point`    |
//! | `MbppJsonl`      | `task_id`, `text`, `test_list`, `test_setup_code` |
//! | `Generic`        | the internal schema (see [`write_tasks`])     |
//!
//! Repair entries always use the internal schema, one object per line:
//! `task_id`, `description`, `buggy_code`, `error_type`, `error_message`,
//! `test_style`, `tests`, `category`, `provenance`, `language`, plus the
//! optional `entry_point` and `harness` keys. Generation tasks use the same
//! shape without the `buggy_code`/`error_*`/`provenance` keys.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::sandbox::ErrorType;

pub const DEFAULT_LANGUAGE: &str = "python";

/// MBPP's evaluation split.
pub const MBPP_EVAL_IDS: std::ops::RangeInclusive<u64> = 11..=510;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON: {message}")]
    InvalidJson { line: usize, message: String },
    #[error("line {line}: record must be a JSON object")]
    NotAnObject { line: usize },
    #[error("line {line}: missing required field '{field}'")]
    MissingField { line: usize, field: String },
    #[error("line {line}: field '{field}' {problem}")]
    InvalidField {
        line: usize,
        field: String,
        problem: String,
    },
    #[error("line {line}: duplicate task_id '{task_id}'")]
    DuplicateTaskId { line: usize, task_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "basic")]
    Basic,
    #[serde(rename = "comp")]
    Competition,
    #[serde(rename = "da")]
    DataAnalysis,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Basic, Category::Competition, Category::DataAnalysis];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Basic => "basic",
            Category::Competition => "comp",
            Category::DataAnalysis => "da",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Category::Basic),
            "comp" => Ok(Category::Competition),
            "da" => Ok(Category::DataAnalysis),
            other => Err(format!("must be one of basic|comp|da, got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "model")]
    ModelGenerated,
    #[serde(rename = "user")]
    UserSubmitted,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ModelGenerated => "model",
            Provenance::UserSubmitted => "user",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestStyle {
    Assertion,
    StdinStdout,
}

impl TestStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            TestStyle::Assertion => "assertion",
            TestStyle::StdinStdout => "stdio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCase {
    pub input: String,
    pub output: String,
}

/// A task's tests. The enum keeps the style uniform across a suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum TestSuite {
    /// Executable assert statements. `harness` is placed between the
    /// candidate and each case (setup code, a `check` function, bindings).
    Assertion {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        harness: Option<String>,
        cases: Vec<String>,
    },
    /// Programs fed `input` on stdin and expected to print `output`.
    Stdio { cases: Vec<IoCase> },
}

impl TestSuite {
    pub fn assertions<I, S>(cases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TestSuite::Assertion {
            harness: None,
            cases: cases.into_iter().map(Into::into).collect(),
        }
    }

    pub fn stdio<I, A, B>(cases: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        TestSuite::Stdio {
            cases: cases
                .into_iter()
                .map(|(i, o)| IoCase {
                    input: i.into(),
                    output: o.into(),
                })
                .collect(),
        }
    }

    pub fn style(&self) -> TestStyle {
        match self {
            TestSuite::Assertion { .. } => TestStyle::Assertion,
            TestSuite::Stdio { .. } => TestStyle::StdinStdout,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TestSuite::Assertion { cases, .. } => cases.len(),
            TestSuite::Stdio { cases } => cases.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Short human-readable form of case `index`, used in error descriptions.
    pub fn describe_case(&self, index: usize) -> Option<String> {
        match self {
            TestSuite::Assertion { cases, .. } => cases.get(index).map(|c| c.trim().to_string()),
            TestSuite::Stdio { cases } => cases.get(index).map(|c| {
                format!(
                    "input {:?}, expected output {:?}",
                    c.input,
                    c.output.trim_end()
                )
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
    pub tests: TestSuite,
    pub category: Category,
    pub language: String,
}

impl Task {
    /// Whitespace-split token count of the description.
    pub fn word_count(&self) -> usize {
        self.description.split_whitespace().count()
    }
}

/// Structured diagnostic attached to a failing execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub error_type: ErrorType,
    pub description: String,
}

impl ErrorMessage {
    pub fn new(error_type: ErrorType, description: impl Into<String>) -> Self {
        Self {
            error_type,
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeErrorEntry {
    pub task: Task,
    pub buggy_code: String,
    pub error: ErrorMessage,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
}

impl TaskSet {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, task_id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn mean_tests(&self) -> f64 {
        if self.tasks.is_empty() {
            return 0.0;
        }
        self.tasks.iter().map(|t| t.tests.len()).sum::<usize>() as f64 / self.tasks.len() as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeErrorSet {
    pub entries: Vec<CodeErrorEntry>,
}

impl CodeErrorSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, task_id: &str) -> Option<&CodeErrorEntry> {
        self.entries.iter().find(|e| e.task.task_id == task_id)
    }
}

/// A non-fatal issue found while loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<LoadWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFormat {
    HumanEvalJsonl,
    MbppJsonl,
    Generic,
}

impl FromStr for TaskFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "humaneval" | "human_eval" | "humaneval-jsonl" => Ok(TaskFormat::HumanEvalJsonl),
            "mbpp" | "mbpp-jsonl" => Ok(TaskFormat::MbppJsonl),
            "generic" | "jsonl" => Ok(TaskFormat::Generic),
            other => Err(format!("unknown task format '{other}' (humaneval|mbpp|generic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Keep only MBPP task ids 11..=510.
    pub eval_slice: bool,
}

pub fn load_tasks(path: &Path, format: TaskFormat, opts: LoadOptions) -> Result<TaskSet, CorpusError> {
    let text = read(path)?;
    parse_tasks(&text, format, opts)
}

pub fn parse_tasks(text: &str, format: TaskFormat, opts: LoadOptions) -> Result<TaskSet, CorpusError> {
    let mut tasks = Vec::new();
    let mut seen = HashSet::new();
    for (line, obj) in records(text) {
        let obj = obj?;
        let task = match format {
            TaskFormat::HumanEvalJsonl => humaneval_task(&obj, line)?,
            TaskFormat::MbppJsonl => {
                let (id, task) = mbpp_task(&obj, line)?;
                if opts.eval_slice && !MBPP_EVAL_IDS.contains(&id) {
                    continue;
                }
                task
            }
            TaskFormat::Generic => generic_task(&obj, line)?,
        };
        if !seen.insert(task.task_id.clone()) {
            return Err(CorpusError::DuplicateTaskId {
                line,
                task_id: task.task_id,
            });
        }
        tasks.push(task);
    }
    Ok(TaskSet { tasks })
}

pub fn load_code_error(path: &Path) -> Result<Loaded<CodeErrorSet>, CorpusError> {
    let text = read(path)?;
    parse_code_error(&text)
}

pub fn parse_code_error(text: &str) -> Result<Loaded<CodeErrorSet>, CorpusError> {
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for (line, obj) in records(text) {
        let obj = obj?;
        let task = generic_task(&obj, line)?;
        let buggy_code = req_str(&obj, "buggy_code", line)?;
        if buggy_code.trim().is_empty() {
            return Err(invalid(line, "buggy_code", "must be non-empty"));
        }
        let type_name = req_str(&obj, "error_type", line)?;
        let error_type = ErrorType::from_name(&type_name).unwrap_or_else(|| {
            let w = LoadWarning {
                line,
                message: format!("unknown error_type '{type_name}' mapped to Other"),
            };
            log::warn!("{w}");
            warnings.push(w);
            ErrorType::Other
        });
        let description = req_str(&obj, "error_message", line)?;
        if error_type != ErrorType::Passed && description.trim().is_empty() {
            return Err(invalid(line, "error_message", "must be non-empty for a failing entry"));
        }
        let provenance = match req_str(&obj, "provenance", line)?.as_str() {
            "model" => Provenance::ModelGenerated,
            "user" => Provenance::UserSubmitted,
            other => {
                return Err(invalid(
                    line,
                    "provenance",
                    &format!("must be model|user, got '{other}'"),
                ))
            }
        };
        if !seen.insert(task.task_id.clone()) {
            return Err(CorpusError::DuplicateTaskId {
                line,
                task_id: task.task_id,
            });
        }
        entries.push(CodeErrorEntry {
            task,
            buggy_code,
            error: ErrorMessage {
                error_type,
                description,
            },
            provenance,
        });
    }
    Ok(Loaded {
        value: CodeErrorSet { entries },
        warnings,
    })
}

pub fn write_code_error(set: &CodeErrorSet, path: &Path) -> Result<(), CorpusError> {
    let lines = set.entries.iter().map(|e| {
        let mut rec = task_record(&e.task);
        rec.buggy_code = Some(&e.buggy_code);
        rec.error_type = Some(e.error.error_type.name());
        rec.error_message = Some(&e.error.description);
        rec.provenance = Some(e.provenance.as_str());
        serde_json::to_string(&rec).expect("record serializes")
    });
    write_lines(path, lines)
}

/// Writes generation tasks in the internal schema (readable as `Generic`).
pub fn write_tasks(set: &TaskSet, path: &Path) -> Result<(), CorpusError> {
    let lines = set
        .tasks
        .iter()
        .map(|t| serde_json::to_string(&task_record(t)).expect("record serializes"));
    write_lines(path, lines)
}

// Field order here is the on-disk key order.
#[derive(Serialize)]
struct Record<'a> {
    task_id: &'a str,
    description: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    buggy_code: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_type: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_message: Option<&'a str>,
    test_style: &'a str,
    tests: Value,
    category: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a str>,
    language: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    entry_point: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    harness: Option<&'a str>,
}

fn task_record(t: &Task) -> Record<'_> {
    let (tests, harness) = match &t.tests {
        TestSuite::Assertion { harness, cases } => (
            Value::Array(cases.iter().cloned().map(Value::String).collect()),
            harness.as_deref(),
        ),
        TestSuite::Stdio { cases } => (
            serde_json::to_value(cases).expect("io cases serialize"),
            None,
        ),
    };
    Record {
        task_id: &t.task_id,
        description: &t.description,
        buggy_code: None,
        error_type: None,
        error_message: None,
        test_style: t.tests.style().as_str(),
        tests,
        category: t.category.as_str(),
        provenance: None,
        language: &t.language,
        entry_point: t.entry_point.as_deref(),
        harness,
    }
}

fn write_lines<I: Iterator<Item = String>>(path: &Path, lines: I) -> Result<(), CorpusError> {
    let wrap = |source| CorpusError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(wrap)?;
    let mut out = BufWriter::new(file);
    for line in lines {
        out.write_all(line.as_bytes()).map_err(wrap)?;
        out.write_all(b"\n").map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines parsed as JSON objects, tagged with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Result<Map<String, Value>, CorpusError>)> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            let parsed = match serde_json::from_str::<Value>(l) {
                Ok(Value::Object(m)) => Ok(m),
                Ok(_) => Err(CorpusError::NotAnObject { line }),
                Err(e) => Err(CorpusError::InvalidJson {
                    line,
                    message: e.to_string(),
                }),
            };
            (line, parsed)
        })
}

fn invalid(line: usize, field: &str, problem: &str) -> CorpusError {
    CorpusError::InvalidField {
        line,
        field: field.to_string(),
        problem: problem.to_string(),
    }
}

fn req<'a>(obj: &'a Map<String, Value>, field: &str, line: usize) -> Result<&'a Value, CorpusError> {
    obj.get(field).ok_or_else(|| CorpusError::MissingField {
        line,
        field: field.to_string(),
    })
}

fn req_str(obj: &Map<String, Value>, field: &str, line: usize) -> Result<String, CorpusError> {
    match req(obj, field, line)? {
        Value::String(s) => Ok(s.clone()),
        _ => Err(invalid(line, field, "must be a string")),
    }
}

fn opt_str(obj: &Map<String, Value>, field: &str, line: usize) -> Result<Option<String>, CorpusError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(invalid(line, field, "must be a string")),
    }
}

fn non_empty_id(id: String, line: usize) -> Result<String, CorpusError> {
    if id.trim().is_empty() {
        Err(invalid(line, "task_id", "must be non-empty"))
    } else {
        Ok(id)
    }
}

fn generic_task(obj: &Map<String, Value>, line: usize) -> Result<Task, CorpusError> {
    let task_id = non_empty_id(req_str(obj, "task_id", line)?, line)?;
    let description = req_str(obj, "description", line)?;
    let style = req_str(obj, "test_style", line)?;
    let raw_tests = match req(obj, "tests", line)? {
        Value::Array(a) => a,
        _ => return Err(invalid(line, "tests", "must be an array")),
    };
    if raw_tests.is_empty() {
        return Err(invalid(line, "tests", "must contain at least one case"));
    }
    let harness = opt_str(obj, "harness", line)?;
    let tests = match style.as_str() {
        "assertion" => {
            let cases = raw_tests
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(invalid(line, "tests", "assertion cases must be strings")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            TestSuite::Assertion { harness, cases }
        }
        "stdio" => {
            if harness.is_some() {
                return Err(invalid(line, "harness", "is only valid for assertion suites"));
            }
            let cases = raw_tests
                .iter()
                .map(|v| {
                    serde_json::from_value::<IoCase>(v.clone()).map_err(|_| {
                        invalid(line, "tests", "stdio cases must be {\"input\", \"output\"} string objects")
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            TestSuite::Stdio { cases }
        }
        other => {
            return Err(invalid(
                line,
                "test_style",
                &format!("must be assertion|stdio, got '{other}'"),
            ))
        }
    };
    let category = req_str(obj, "category", line)?
        .parse::<Category>()
        .map_err(|p| invalid(line, "category", &p))?;
    let language = opt_str(obj, "language", line)?.unwrap_or_else(|| DEFAULT_LANGUAGE.to_string());
    Ok(Task {
        task_id,
        description,
        entry_point: opt_str(obj, "entry_point", line)?,
        tests,
        category,
        language,
    })
}

fn humaneval_task(obj: &Map<String, Value>, line: usize) -> Result<Task, CorpusError> {
    let task_id = non_empty_id(req_str(obj, "task_id", line)?, line)?;
    let prompt = req_str(obj, "prompt", line)?;
    let test = req_str(obj, "test", line)?;
    let entry_point = req_str(obj, "entry_point", line)?;
    let tests = humaneval_suite(&test, &entry_point);
    Ok(Task {
        task_id,
        description: prompt,
        entry_point: Some(entry_point),
        tests,
        category: Category::Basic,
        language: DEFAULT_LANGUAGE.to_string(),
    })
}

/// The whole `test` text becomes the harness. When the body of
/// `check(candidate)` is a flat list of asserts, each assert becomes its own
/// case with `candidate` bound to the entry point; otherwise the suite has a
/// single `check(<entry_point>)` case.
fn humaneval_suite(test: &str, entry_point: &str) -> TestSuite {
    match split_check_asserts(test) {
        Some(cases) if !cases.is_empty() => TestSuite::Assertion {
            harness: Some(format!("{}\n\ncandidate = {entry_point}\n", test.trim_end())),
            cases,
        },
        _ => TestSuite::Assertion {
            harness: Some(test.trim_end().to_string()),
            cases: vec![format!("check({entry_point})")],
        },
    }
}

/// Splits the body of `def check(candidate):` into top-level statements and
/// returns them dedented, or `None` if any statement is not an `assert`.
pub(crate) fn split_check_asserts(test: &str) -> Option<Vec<String>> {
    let lines: Vec<&str> = test.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.trim_start().starts_with("def check(") && indent(l) == 0)?;
    let body: Vec<&str> = lines[start + 1..]
        .iter()
        .take_while(|l| l.trim().is_empty() || indent(l) > 0)
        .copied()
        .collect();
    let base = body.iter().find(|l| !l.trim().is_empty()).map(|l| indent(l))?;

    let mut statements: Vec<String> = Vec::new();
    let mut depth: i32 = 0;
    let mut continued = false;
    let mut in_triple: Option<&str> = None;
    for raw in body {
        if raw.trim().is_empty() {
            if let Some(cur) = statements.last_mut() {
                if depth > 0 || in_triple.is_some() {
                    cur.push('\n');
                }
            }
            continue;
        }
        let starts_statement = depth == 0 && !continued && in_triple.is_none();
        if starts_statement {
            if indent(raw) != base {
                // nested block (for/if/with) at top level of check()
                return None;
            }
            let stmt = &raw[base..];
            if stmt.starts_with('#') {
                continue;
            }
            statements.push(stmt.to_string());
        } else {
            let cur = statements.last_mut()?;
            cur.push('\n');
            cur.push_str(raw.get(base..).unwrap_or(raw.trim_start()));
        }
        let (d, triple) = scan_brackets(raw, in_triple);
        depth += d;
        in_triple = triple;
        continued = raw.trim_end().ends_with('\\');
    }
    if statements.iter().all(|s| s.starts_with("assert")) {
        Some(statements)
    } else {
        None
    }
}

fn indent(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// Net bracket depth change of one line, skipping string literals and
/// comments. Tracks an open triple-quoted string across lines.
fn scan_brackets<'q>(line: &str, mut triple: Option<&'q str>) -> (i32, Option<&'q str>) {
    let bytes = line.as_bytes();
    let mut depth = 0;
    let mut i = 0;
    while i < bytes.len() {
        if let Some(q) = triple {
            if line[i..].starts_with(q) {
                triple = None;
                i += 3;
            } else {
                i += 1;
            }
            continue;
        }
        match bytes[i] {
            b'#' => break,
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            q @ (b'"' | b'\'') => {
                let tq: &'q str = if q == b'"' { "\"\"\"" } else { "'''" };
                if line[i..].starts_with(tq) {
                    triple = Some(tq);
                    i += 3;
                    continue;
                }
                i += 1;
                while i < bytes.len() && bytes[i] != q {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    (depth, triple)
}

fn mbpp_task(obj: &Map<String, Value>, line: usize) -> Result<(u64, Task), CorpusError> {
    let id = match req(obj, "task_id", line)? {
        Value::Number(n) => n.as_u64().ok_or_else(|| invalid(line, "task_id", "must be a non-negative integer"))?,
        Value::String(s) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| invalid(line, "task_id", "must be an integer"))?,
        _ => return Err(invalid(line, "task_id", "must be an integer")),
    };
    let text = req_str(obj, "text", line)?;
    let cases = match req(obj, "test_list", line)? {
        Value::Array(a) => a
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid(line, "test_list", "must be an array of strings"))?,
        _ => return Err(invalid(line, "test_list", "must be an array of strings")),
    };
    if cases.is_empty() {
        return Err(invalid(line, "test_list", "must contain at least one case"));
    }
    let harness = opt_str(obj, "test_setup_code", line)?.filter(|s| !s.trim().is_empty());
    let entry_point = assert_callee(&cases[0]);
    Ok((
        id,
        Task {
            task_id: format!("MBPP/{id}"),
            description: text,
            entry_point,
            tests: TestSuite::Assertion { harness, cases },
            category: Category::Basic,
            language: DEFAULT_LANGUAGE.to_string(),
        },
    ))
}

fn assert_callee(case: &str) -> Option<String> {
    let re = Regex::new(r"^\s*assert\s+(?:not\s+)?(?:\(\s*)*(?:set\(|math\.isclose\()?\s*([A-Za-z_]\w*)\s*\(").unwrap();
    re.captures(case).map(|c| c[1].to_string())
}
