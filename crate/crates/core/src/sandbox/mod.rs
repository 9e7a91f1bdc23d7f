//! Runs candidate programs against test suites in child processes.
//!
//! Every call to [`Sandbox::run_candidate`] gets a fresh temporary working
//! directory, a cleared environment (plus an allowlist), a per-case wall-clock
//! timeout and a cap on captured output. There is no OS-level isolation: the
//! child can still touch the network and any file the user can. Wrap
//! `RunnerConfig::command` in an external jail (bwrap, firejail, nsjail) when
//! running untrusted code.

mod traceback;

use std::fmt;
use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use traceback::{classify_error, parse_traceback, parse_traceback_in, NO_DIAGNOSTIC};

use crate::corpus::{ErrorMessage, TestSuite};
use crate::pool::Semaphore;

/// Slack allowed on top of the per-case timeout when reaping a killed child.
pub const TIMEOUT_GRACE: Duration = Duration::from_secs(2);

/// Longest test-case excerpt quoted in an error description.
const CASE_EXCERPT_CHARS: usize = 400;

const SCRIPT_STEM: &str = "candidate";

/// Internal capture sizes; reports are truncated to `max_output_bytes`.
const STDOUT_CAPTURE: usize = 1 << 20;
const STDERR_TAIL: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    Passed,
    AssertionError,
    NameError,
    TypeError,
    IndexError,
    ValueError,
    SyntaxError,
    AttributeError,
    RecursionError,
    Timeout,
    Other,
}

impl ErrorType {
    pub const ALL: [ErrorType; 11] = [
        ErrorType::Passed,
        ErrorType::AssertionError,
        ErrorType::NameError,
        ErrorType::TypeError,
        ErrorType::IndexError,
        ErrorType::ValueError,
        ErrorType::SyntaxError,
        ErrorType::AttributeError,
        ErrorType::RecursionError,
        ErrorType::Timeout,
        ErrorType::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorType::Passed => "Passed",
            ErrorType::AssertionError => "AssertionError",
            ErrorType::NameError => "NameError",
            ErrorType::TypeError => "TypeError",
            ErrorType::IndexError => "IndexError",
            ErrorType::ValueError => "ValueError",
            ErrorType::SyntaxError => "SyntaxError",
            ErrorType::AttributeError => "AttributeError",
            ErrorType::RecursionError => "RecursionError",
            ErrorType::Timeout => "Timeout",
            ErrorType::Other => "Other",
        }
    }

    /// Exact lookup by variant name; `None` for anything outside the taxonomy.
    pub fn from_name(name: &str) -> Option<ErrorType> {
        ErrorType::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Passed,
    Failed,
    Timeout,
    RunnerError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub verdict: Verdict,
    pub error: Option<ErrorMessage>,
    pub failing_case_index: Option<usize>,
    pub raw_stdout: String,
    pub raw_stderr: String,
    /// Seconds.
    pub wall_time: f64,
}

impl ExecutionReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Passed
    }

    pub fn error_type(&self) -> ErrorType {
        match (&self.error, self.verdict) {
            (_, Verdict::Passed) => ErrorType::Passed,
            (Some(e), _) => e.error_type,
            (None, Verdict::Timeout) => ErrorType::Timeout,
            (None, _) => ErrorType::Other,
        }
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("invalid runner config: {0}")]
    InvalidRunner(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecLimits {
    /// Per-case timeout in seconds.
    pub timeout_secs: f64,
    pub max_output_bytes: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            timeout_secs: 10.0,
            max_output_bytes: 16384,
        }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(SandboxError::InvalidLimits("timeout_secs must be > 0".into()));
        }
        if self.max_output_bytes == 0 {
            return Err(SandboxError::InvalidLimits("max_output_bytes must be > 0".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// How to turn a source file into a running process.
///
/// `command` and `compile_command` are argv templates. `{file}` expands to the
/// candidate's file name (the process runs inside the temporary directory) and
/// `{stdin}` to a file holding the case input; without `{stdin}` the input is
/// piped to the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunnerConfig {
    pub command: Vec<String>,
    pub compile_command: Option<Vec<String>>,
    pub file_extension: String,
    /// Variables copied from the parent environment; everything else is cleared.
    pub env_allowlist: Vec<String>,
    /// Upper bound on live child processes across the process; 0 = CPU count.
    pub max_concurrency: usize,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self::python()
    }
}

impl RunnerConfig {
    pub fn python() -> Self {
        Self {
            command: vec!["python3".into(), "{file}".into()],
            compile_command: None,
            file_extension: "py".into(),
            env_allowlist: vec!["PATH".into(), "LANG".into(), "LC_ALL".into(), "SYSTEMROOT".into()],
            max_concurrency: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.command.is_empty() {
            return Err(SandboxError::InvalidRunner("command must not be empty".into()));
        }
        if matches!(&self.compile_command, Some(c) if c.is_empty()) {
            return Err(SandboxError::InvalidRunner("compile_command must not be empty when set".into()));
        }
        if self.file_extension.is_empty() || self.file_extension.contains('/') {
            return Err(SandboxError::InvalidRunner("file_extension must be a bare extension".into()));
        }
        Ok(())
    }

    fn file_name(&self) -> String {
        format!("{SCRIPT_STEM}.{}", self.file_extension)
    }
}

static CHILD_SLOTS: OnceLock<Semaphore> = OnceLock::new();

fn child_slots(requested: usize) -> &'static Semaphore {
    CHILD_SLOTS.get_or_init(|| {
        let n = if requested == 0 {
            thread::available_parallelism().map(|n| n.get()).unwrap_or(4)
        } else {
            requested
        };
        Semaphore::new(n)
    })
}

/// Anything that can judge a candidate against a suite. The repair loop and
/// the builder only see this trait, so tests can plug in a fake.
pub trait Executor: Send + Sync {
    fn execute(&self, code: &str, suite: &TestSuite) -> ExecutionReport;
}

#[derive(Debug, Clone)]
pub struct Sandbox {
    runner: RunnerConfig,
    limits: ExecLimits,
}

impl Sandbox {
    /// The first sandbox created fixes the process-wide child limit.
    pub fn new(runner: RunnerConfig, limits: ExecLimits) -> Result<Self, SandboxError> {
        runner.validate()?;
        limits.validate()?;
        child_slots(runner.max_concurrency);
        Ok(Self { runner, limits })
    }

    pub fn python(limits: ExecLimits) -> Result<Self, SandboxError> {
        Self::new(RunnerConfig::python(), limits)
    }

    pub fn limits(&self) -> &ExecLimits {
        &self.limits
    }

    pub fn runner(&self) -> &RunnerConfig {
        &self.runner
    }

    pub fn run_candidate(&self, code: &str, suite: &TestSuite) -> ExecutionReport {
        let started = Instant::now();
        let mut report = match tempfile::Builder::new().prefix("corepair-").tempdir() {
            Ok(dir) => self.run_in(dir.path(), code, suite),
            Err(e) => runner_error(format!("cannot create working directory: {e}")),
        };
        report.wall_time = started.elapsed().as_secs_f64();
        report
    }

    fn run_in(&self, dir: &Path, code: &str, suite: &TestSuite) -> ExecutionReport {
        let file = self.runner.file_name();
        if let Some(compile) = &self.runner.compile_command {
            if let Err(e) = std::fs::write(dir.join(&file), code) {
                return runner_error(format!("cannot write candidate: {e}"));
            }
            let argv = expand(compile, &file, None);
            match self.spawn(dir, &argv, None) {
                Err(e) => return runner_error(format!("compiler failed to start: {e}")),
                Ok(out) if out.timed_out => {
                    return self.timeout_report(None, suite, out);
                }
                Ok(out) if !out.success() => {
                    let error = parse_traceback_in(out.stderr.for_parsing(), Some(&file));
                    return self.failure(error, None, suite, out);
                }
                Ok(_) => {}
            }
        }

        let mut last = ProcOutput::default();
        for index in 0..suite.len() {
            let (source, io) = match suite {
                TestSuite::Assertion { harness, cases } => {
                    (Some(assemble(code, harness.as_deref(), &cases[index])), None)
                }
                TestSuite::Stdio { cases } => {
                    let src = self.runner.compile_command.is_none().then(|| code.to_string());
                    (src, Some(&cases[index]))
                }
            };
            if let Some(src) = source {
                if let Err(e) = std::fs::write(dir.join(&file), src) {
                    return runner_error(format!("cannot write candidate: {e}"));
                }
            }
            let input = io.map(|c| c.input.as_str());
            let stdin_file = dir.join("stdin.txt");
            let uses_stdin_file = self.runner.command.iter().any(|a| a.contains("{stdin}"));
            if uses_stdin_file {
                if let Err(e) = std::fs::write(&stdin_file, input.unwrap_or("")) {
                    return runner_error(format!("cannot write stdin file: {e}"));
                }
            }
            let argv = expand(&self.runner.command, &file, Some("stdin.txt"));
            let out = match self.spawn(dir, &argv, if uses_stdin_file { None } else { input }) {
                Ok(out) => out,
                Err(e) => return runner_error(format!("runner failed to start: {e}")),
            };
            if out.timed_out {
                return self.timeout_report(Some(index), suite, out);
            }
            if !out.success() {
                let error = parse_traceback_in(out.stderr.for_parsing(), Some(&file));
                return self.failure(error, Some(index), suite, out);
            }
            if let Some(case) = io {
                if !outputs_match(&out.stdout.head, &case.output) {
                    let error = ErrorMessage::new(
                        ErrorType::AssertionError,
                        format!(
                            "wrong answer: expected {:?}, got {:?}",
                            normalize_output(&case.output),
                            truncate_chars(&normalize_output(&out.stdout.head), CASE_EXCERPT_CHARS)
                        ),
                    );
                    return self.failure(error, Some(index), suite, out);
                }
            }
            last = out;
        }
        ExecutionReport {
            verdict: Verdict::Passed,
            error: None,
            failing_case_index: None,
            raw_stdout: truncate_bytes(&last.stdout.head, self.limits.max_output_bytes),
            raw_stderr: tail_bytes(last.stderr.for_parsing(), self.limits.max_output_bytes),
            wall_time: 0.0,
        }
    }

    fn failure(&self, mut error: ErrorMessage, index: Option<usize>, suite: &TestSuite, out: ProcOutput) -> ExecutionReport {
        if let Some(i) = index {
            append_case(&mut error, i, suite);
        }
        ExecutionReport {
            verdict: Verdict::Failed,
            error: Some(error),
            failing_case_index: index,
            raw_stdout: truncate_bytes(&out.stdout.head, self.limits.max_output_bytes),
            raw_stderr: tail_bytes(out.stderr.for_parsing(), self.limits.max_output_bytes),
            wall_time: 0.0,
        }
    }

    fn timeout_report(&self, index: Option<usize>, suite: &TestSuite, out: ProcOutput) -> ExecutionReport {
        let mut error = ErrorMessage::new(
            ErrorType::Timeout,
            format!("Timeout: time limit of {}s exceeded", self.limits.timeout_secs),
        );
        if let Some(i) = index {
            append_case(&mut error, i, suite);
        }
        ExecutionReport {
            verdict: Verdict::Timeout,
            error: Some(error),
            failing_case_index: index,
            raw_stdout: truncate_bytes(&out.stdout.head, self.limits.max_output_bytes),
            raw_stderr: tail_bytes(out.stderr.for_parsing(), self.limits.max_output_bytes),
            wall_time: 0.0,
        }
    }

    fn spawn(&self, dir: &Path, argv: &[String], input: Option<&str>) -> io::Result<ProcOutput> {
        let _slot = child_slots(self.runner.max_concurrency).acquire();
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(dir)
            .env_clear()
            .stdin(if input.is_some() { Stdio::piped() } else { Stdio::null() })
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        for key in &self.runner.env_allowlist {
            if let Some(v) = std::env::var_os(key) {
                cmd.env(key, v);
            }
        }
        cmd.env("HOME", dir)
            .env("TMPDIR", dir)
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1");

        let mut child = cmd.spawn()?;
        let started = Instant::now();
        let head_cap = self.limits.max_output_bytes.max(STDOUT_CAPTURE);
        let stdout = child
            .stdout
            .take()
            .map(|s| thread::spawn(move || read_stream(s, head_cap, 0)));
        let stderr = child
            .stderr
            .take()
            .map(|s| thread::spawn(move || read_stream(s, head_cap, STDERR_TAIL)));
        let writer = match (child.stdin.take(), input) {
            (Some(mut pipe), Some(text)) => {
                let text = text.to_string();
                Some(thread::spawn(move || {
                    // the child may exit without reading; a broken pipe is fine
                    let _ = pipe.write_all(text.as_bytes());
                }))
            }
            _ => None,
        };

        let deadline = self.limits.timeout();
        let mut timed_out = false;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if started.elapsed() >= deadline {
                timed_out = true;
                kill_group(child.id());
                let _ = child.kill();
                break child.wait()?;
            }
            thread::sleep(Duration::from_millis(5));
        };
        // reap stragglers that inherited the pipes
        kill_group(child.id());

        if let Some(w) = writer {
            let _ = w.join();
        }
        let stdout = stdout.map(|h| h.join().unwrap_or_default()).unwrap_or_default();
        let stderr = stderr.map(|h| h.join().unwrap_or_default()).unwrap_or_default();
        Ok(ProcOutput {
            status: Some(status),
            timed_out,
            stdout,
            stderr,
        })
    }
}

impl Executor for Sandbox {
    fn execute(&self, code: &str, suite: &TestSuite) -> ExecutionReport {
        self.run_candidate(code, suite)
    }
}

/// One-shot convenience around [`Sandbox::run_candidate`].
pub fn run_candidate(
    code: &str,
    suite: &TestSuite,
    limits: &ExecLimits,
    runner: &RunnerConfig,
) -> Result<ExecutionReport, SandboxError> {
    Ok(Sandbox::new(runner.clone(), limits.clone())?.run_candidate(code, suite))
}

#[derive(Debug, Default)]
struct ProcOutput {
    status: Option<ExitStatus>,
    timed_out: bool,
    stdout: Captured,
    stderr: Captured,
}

impl ProcOutput {
    fn success(&self) -> bool {
        self.status.map(|s| s.success()).unwrap_or(false)
    }
}

fn kill_group(pid: u32) {
    // SAFETY: killpg only sends a signal; the group was created for this child
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

/// Reads a stream to the end, keeping the first `head_cap` bytes and the last
/// `tail_cap` bytes.
fn read_stream<R: Read>(mut r: R, head_cap: usize, tail_cap: usize) -> Captured {
    let mut head = Vec::with_capacity(head_cap.min(8192));
    let mut tail: std::collections::VecDeque<u8> = std::collections::VecDeque::new();
    let mut total = 0usize;
    let mut buf = [0u8; 8192];
    loop {
        match r.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                total += n;
                let room = head_cap.saturating_sub(head.len());
                head.extend_from_slice(&buf[..n.min(room)]);
                tail.extend(&buf[..n]);
                while tail.len() > tail_cap {
                    tail.pop_front();
                }
            }
        }
    }
    let complete = total <= head_cap;
    Captured {
        head: String::from_utf8_lossy(&head).into_owned(),
        tail: String::from_utf8_lossy(tail.make_contiguous()).into_owned(),
        complete,
    }
}

#[derive(Debug, Default)]
struct Captured {
    head: String,
    tail: String,
    /// `head` holds the whole stream.
    complete: bool,
}

impl Captured {
    /// Text to parse diagnostics from: the whole stream when it fit, else the tail.
    fn for_parsing(&self) -> &str {
        if self.complete {
            &self.head
        } else {
            &self.tail
        }
    }
}

/// Keeps the last `cap` bytes, where diagnostics live.
fn tail_bytes(s: &str, cap: usize) -> String {
    if s.len() <= cap {
        return s.to_string();
    }
    let mut start = s.len() - cap;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    s[start..].to_string()
}

fn truncate_bytes(s: &str, cap: usize) -> String {
    if s.len() <= cap {
        return s.to_string();
    }
    let mut end = cap;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    s[..end].to_string()
}

fn runner_error(message: String) -> ExecutionReport {
    log::warn!("{message}");
    ExecutionReport {
        verdict: Verdict::RunnerError,
        error: Some(ErrorMessage::new(ErrorType::Other, message)),
        failing_case_index: None,
        raw_stdout: String::new(),
        raw_stderr: String::new(),
        wall_time: 0.0,
    }
}

fn expand(template: &[String], file: &str, stdin: Option<&str>) -> Vec<String> {
    template
        .iter()
        .map(|a| {
            let a = a.replace("{file}", file);
            match stdin {
                Some(s) => a.replace("{stdin}", s),
                None => a,
            }
        })
        .collect()
}

fn assemble(code: &str, harness: Option<&str>, case: &str) -> String {
    let mut s = String::with_capacity(code.len() + case.len() + 64);
    s.push_str(code.trim_end());
    s.push_str("\n\n");
    if let Some(h) = harness {
        s.push_str(h.trim_end());
        s.push_str("\n\n");
    }
    s.push_str(case.trim_end());
    s.push('\n');
    s
}

fn append_case(error: &mut ErrorMessage, index: usize, suite: &TestSuite) {
    if let Some(case) = suite.describe_case(index) {
        error.description.push_str(&format!(
            "\nfailed test #{index}: {}",
            truncate_chars(&case, CASE_EXCERPT_CHARS)
        ));
    }
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Strips trailing whitespace from every line and trailing blank lines.
pub fn normalize_output(s: &str) -> String {
    let lines: Vec<&str> = s.lines().map(str::trim_end).collect();
    lines.join("\n").trim_end().to_string()
}

pub fn outputs_match(actual: &str, expected: &str) -> bool {
    normalize_output(actual) == normalize_output(expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExecLimits {
        ExecLimits {
            timeout_secs: 5.0,
            max_output_bytes: 4096,
        }
    }

    fn sandbox() -> Sandbox {
        Sandbox::python(quick()).unwrap()
    }

    #[test]
    fn identity_case_passes() {
        let r = sandbox().run_candidate("def f(): return 1", &TestSuite::assertions(["assert f()==1"]));
        assert_eq!(r.verdict, Verdict::Passed);
        assert!(r.error.is_none());
        assert_eq!(r.error_type(), ErrorType::Passed);
    }

    #[test]
    fn failed_assert_is_assertion_error_with_case() {
        let suite = TestSuite::assertions(["assert f()==1", "assert f()==2"]);
        let r = sandbox().run_candidate("def f(): return 1", &suite);
        assert_eq!(r.verdict, Verdict::Failed);
        assert_eq!(r.failing_case_index, Some(1));
        let e = r.error.unwrap();
        assert_eq!(e.error_type, ErrorType::AssertionError);
        assert!(e.description.contains("failed test #1: assert f()==2"), "{}", e.description);
    }

    #[test]
    fn infinite_loop_times_out() {
        let limits = ExecLimits {
            timeout_secs: 1.0,
            ..quick()
        };
        let sb = Sandbox::python(limits).unwrap();
        let r = sb.run_candidate("while True: pass", &TestSuite::assertions(["assert True"]));
        assert_eq!(r.verdict, Verdict::Timeout);
        assert_eq!(r.error_type(), ErrorType::Timeout);
        assert!(r.wall_time >= 1.0);
        assert!(r.wall_time <= 1.0 + TIMEOUT_GRACE.as_secs_f64());
    }

    #[test]
    fn stdio_adder_passes() {
        // expected output recorded from `printf '3 5' | python3 adder.py` -> "8\n"
        let adder = "a, b = map(int, input().split())\nprint(a + b)\n";
        let suite = TestSuite::stdio([("3 5", "8")]);
        let r = sandbox().run_candidate(adder, &suite);
        assert_eq!(r.verdict, Verdict::Passed, "{r:?}");
        assert_eq!(r.raw_stdout, "8\n");
    }

    #[test]
    fn stdio_wrong_answer() {
        let suite = TestSuite::stdio([("3 5", "8"), ("1 1", "3")]);
        let r = sandbox().run_candidate("a, b = map(int, input().split())\nprint(a + b)\n", &suite);
        assert_eq!(r.verdict, Verdict::Failed);
        assert_eq!(r.failing_case_index, Some(1));
        let e = r.error.unwrap();
        assert_eq!(e.error_type, ErrorType::AssertionError);
        assert!(e.description.contains("expected \"3\", got \"2\""), "{}", e.description);
    }

    #[test]
    fn stdin_file_placeholder() {
        let runner = RunnerConfig {
            command: vec!["sh".into(), "-c".into(), "python3 {file} < {stdin}".into()],
            ..RunnerConfig::python()
        };
        let sb = Sandbox::new(runner, quick()).unwrap();
        let r = sb.run_candidate("print(int(input()) * 2)", &TestSuite::stdio([("21", "42\n")]));
        assert_eq!(r.verdict, Verdict::Passed, "{r:?}");
    }

    #[test]
    fn compile_then_run_template() {
        // "compiles" by copying the source; exercises the compile step generically
        let runner = RunnerConfig {
            command: vec!["python3".into(), "built.py".into()],
            compile_command: Some(vec!["cp".into(), "{file}".into(), "built.py".into()]),
            ..RunnerConfig::python()
        };
        let sb = Sandbox::new(runner.clone(), quick()).unwrap();
        let r = sb.run_candidate("print(input())", &TestSuite::stdio([("hi", "hi")]));
        assert_eq!(r.verdict, Verdict::Passed, "{r:?}");

        let failing = RunnerConfig {
            compile_command: Some(vec!["sh".into(), "-c".into(), "echo 'error: bad' >&2; exit 1".into()]),
            ..runner
        };
        let r = Sandbox::new(failing, quick()).unwrap().run_candidate("x", &TestSuite::stdio([("", "")]));
        assert_eq!(r.verdict, Verdict::Failed);
        assert_eq!(r.failing_case_index, None);
        assert!(r.error.unwrap().description.contains("error: bad"));
    }

    #[test]
    fn missing_interpreter_is_runner_error() {
        let runner = RunnerConfig {
            command: vec!["definitely-not-a-real-interpreter-xyz".into(), "{file}".into()],
            ..RunnerConfig::python()
        };
        let r = Sandbox::new(runner, quick())
            .unwrap()
            .run_candidate("pass", &TestSuite::assertions(["assert True"]));
        assert_eq!(r.verdict, Verdict::RunnerError);
    }

    #[test]
    fn output_is_capped() {
        let limits = ExecLimits {
            max_output_bytes: 100,
            ..quick()
        };
        let r = Sandbox::python(limits)
            .unwrap()
            .run_candidate("print('x' * 100000)\nassert False", &TestSuite::assertions(["pass"]));
        assert_eq!(r.raw_stdout.len(), 100);
        assert!(r.raw_stderr.len() <= 100);
        assert!(r.raw_stderr.ends_with("AssertionError\n"));
        assert_eq!(r.error_type(), ErrorType::AssertionError);
    }

    #[test]
    fn environment_is_cleared() {
        std::env::set_var("COREPAIR_SECRET_PROBE", "leak");
        let r = sandbox().run_candidate(
            "import os",
            &TestSuite::assertions(["assert 'COREPAIR_SECRET_PROBE' not in os.environ"]),
        );
        assert_eq!(r.verdict, Verdict::Passed, "{r:?}");
    }

    #[test]
    fn limits_validation() {
        assert!(ExecLimits { timeout_secs: 0.0, ..quick() }.validate().is_err());
        assert!(ExecLimits { max_output_bytes: 0, ..quick() }.validate().is_err());
        assert!(RunnerConfig { command: vec![], ..RunnerConfig::python() }.validate().is_err());
    }

    #[test]
    fn normalization_only_touches_trailing_whitespace() {
        assert!(outputs_match("8  \n\n", "8"));
        assert!(outputs_match("1 2 \n3\n", "1 2\n3"));
        assert!(!outputs_match(" 8", "8"));
        assert!(!outputs_match("1\n\n2", "1\n2"));
    }

    #[test]
    fn error_type_names_round_trip() {
        for t in ErrorType::ALL {
            assert_eq!(ErrorType::from_name(t.name()), Some(t));
        }
        assert_eq!(ErrorType::from_name("WeirdError"), None);
    }
}
