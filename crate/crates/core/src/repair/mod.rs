//! The interactive repair loop.
//!
//! One episode:
//!
//! 1. (optional) the learner writes an initial program from the task;
//! 2. the sandbox runs the current program;
//! 3. on failure, feedback is produced according to the mode (a teacher CoR,
//!    a self-critique, the raw error message, or nothing);
//! 4. the learner rewrites the program, which is executed again.
//!
//! Steps 3 and 4 form one repair turn. The episode ends on the first passing
//! execution or after `max_turns` repair turns. The final verdict always comes
//! from an execution.

mod batch;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{
    load_manifest, load_trajectories, load_trajectory, run_batch, trajectory_file_name, write_trajectory, BatchError,
    BatchOptions, BatchOutcome, ManifestRow, MANIFEST_FILE, TRAJECTORY_DIR,
};

use crate::agents::{
    feedback_text, learner_call, plain_call, AgentError, ChatModel, ChatModelConfig, CoRText, PromptMode, Teacher,
    TemplateCatalog, MAX_FEEDBACK_CHARS,
};
use crate::corpus::{CodeErrorEntry, Task};
use crate::sandbox::{ExecLimits, ExecutionReport, Executor, Verdict};

pub const DEFAULT_MAX_TURNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    Cor,
    SelfRefine,
    ErrorMsgs,
    RepairZeroShot,
    RepairFewShot,
    RepairCot,
}

impl RepairMode {
    pub const ALL: [RepairMode; 6] = [
        RepairMode::Cor,
        RepairMode::SelfRefine,
        RepairMode::ErrorMsgs,
        RepairMode::RepairZeroShot,
        RepairMode::RepairFewShot,
        RepairMode::RepairCot,
    ];

    /// Model calls spent by one repair turn.
    pub fn calls_per_turn(self) -> usize {
        match self {
            RepairMode::Cor | RepairMode::SelfRefine => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RepairMode::Cor => "cor",
            RepairMode::SelfRefine => "self_refine",
            RepairMode::ErrorMsgs => "error_msgs",
            RepairMode::RepairZeroShot => "repair_zero_shot",
            RepairMode::RepairFewShot => "repair_few_shot",
            RepairMode::RepairCot => "repair_cot",
        }
    }
}

impl fmt::Display for RepairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RepairMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        RepairMode::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| format!("unknown repair mode '{s}'"))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("CoR mode requires a teacher model")]
    MissingTeacher,
    #[error("generation_mode must be one of zero_shot|zero_shot_cot|few_shot|few_shot_cot, got {0}")]
    NotAGenerationMode(PromptMode),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepairConfig {
    pub max_turns: usize,
    pub mode: RepairMode,
    /// Generate the first program (true) or start from given buggy code.
    pub include_generation: bool,
    pub generation_mode: PromptMode,
    pub learner: ChatModelConfig,
    pub teacher: Option<ChatModelConfig>,
    pub limits: ExecLimits,
    pub teacher_sees_description: bool,
    /// Replay earlier teacher exchanges of the episode in each teacher call.
    pub teacher_history: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            mode: RepairMode::Cor,
            include_generation: true,
            generation_mode: PromptMode::ZeroShot,
            learner: ChatModelConfig::default(),
            teacher: Some(ChatModelConfig::default()),
            limits: ExecLimits::default(),
            teacher_sees_description: true,
            teacher_history: false,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mode == RepairMode::Cor && self.max_turns > 0 && self.teacher.is_none() {
            return Err(ConfigError::MissingTeacher);
        }
        if !self.generation_mode.is_generation() {
            return Err(ConfigError::NotAGenerationMode(self.generation_mode));
        }
        self.learner.validate().map_err(|e| ConfigError::Invalid(format!("learner: {e}")))?;
        if let Some(t) = &self.teacher {
            t.validate().map_err(|e| ConfigError::Invalid(format!("teacher: {e}")))?;
        }
        self.limits.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Model calls an episode must record when it runs `repair_turns` turns
    /// without aborting.
    pub fn expected_calls(&self, repair_turns: usize) -> usize {
        usize::from(self.include_generation) + self.mode.calls_per_turn() * repair_turns
    }
}

/// What an episode starts from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpisodeInput {
    Generate(Task),
    Repair(CodeErrorEntry),
}

impl EpisodeInput {
    pub fn task(&self) -> &Task {
        match self {
            EpisodeInput::Generate(t) => t,
            EpisodeInput::Repair(e) => &e.task,
        }
    }

    pub fn task_id(&self) -> &str {
        &self.task().task_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalVerdict {
    Passed,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: usize,
    pub code: String,
    pub report: ExecutionReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cor: Option<CoRText>,
    /// Self-refine critique, when that mode is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critique: Option<String>,
    pub calls_this_turn: usize,
}

/// Everything that happened in one episode. `turns[0]` is the starting
/// program (generated or given); each later record is one repair turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub mode: RepairMode,
    pub include_generation: bool,
    pub turns: Vec<TurnRecord>,
    pub final_verdict: FinalVerdict,
    pub model_calls: usize,
    /// Seconds.
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl Trajectory {
    pub fn repair_turns(&self) -> usize {
        self.turns.len().saturating_sub(1)
    }

    pub fn passed(&self) -> bool {
        self.final_verdict == FinalVerdict::Passed
    }

    /// Repair turns needed to pass, if it passed.
    pub fn passed_at_turn(&self) -> Option<usize> {
        self.passed().then(|| self.repair_turns())
    }

    pub fn aborted(&self) -> bool {
        self.abort_reason.is_some()
    }

    pub fn last_report(&self) -> Option<&ExecutionReport> {
        self.turns.last().map(|t| &t.report)
    }

    fn aborted_without_turns(task_id: &str, mode: RepairMode, include_generation: bool, reason: String) -> Self {
        Self {
            task_id: task_id.to_string(),
            mode,
            include_generation,
            turns: Vec::new(),
            final_verdict: FinalVerdict::Unresolved,
            model_calls: 0,
            wall_time: 0.0,
            abort_reason: Some(reason),
        }
    }

    /// Structural invariants; returns the first violation.
    pub fn check_invariants(&self, config: &RepairConfig) -> Result<(), String> {
        if self.repair_turns() > config.max_turns {
            return Err(format!("{} repair turns exceed max_turns {}", self.repair_turns(), config.max_turns));
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.turn_index != i {
                return Err(format!("turn {i} has index {}", t.turn_index));
            }
            if t.report.passed() && i + 1 != self.turns.len() {
                return Err(format!("turn {} follows a passing execution", i + 1));
            }
            if i > 0 && self.mode == RepairMode::Cor && t.cor.is_none() {
                return Err(format!("repair turn {i} lacks a CoR"));
            }
        }
        let last_passed = self.last_report().is_some_and(ExecutionReport::passed);
        if last_passed != self.passed() {
            return Err("final verdict disagrees with the last execution".into());
        }
        let summed: usize = self.turns.iter().map(|t| t.calls_this_turn).sum();
        if !self.aborted() {
            if summed != self.model_calls {
                return Err(format!("turn calls sum to {summed}, trajectory says {}", self.model_calls));
            }
            let expected = config.expected_calls(self.repair_turns());
            if self.model_calls != expected {
                return Err(format!("model_calls {} != expected {expected}", self.model_calls));
            }
        }
        Ok(())
    }
}

/// Model sessions for one episode.
#[derive(Debug)]
pub struct EpisodeAgents {
    pub learner: ChatModel,
    pub teacher: Option<ChatModel>,
}

impl EpisodeAgents {
    /// Opens fresh sessions (scripted backends start from the top of the
    /// script selected for `task_id`).
    pub fn from_config(config: &RepairConfig, task_id: &str) -> Result<Self, AgentError> {
        let learner = ChatModel::for_task(config.learner.clone(), Some(task_id))?;
        let teacher = match (&config.teacher, config.mode) {
            (Some(t), RepairMode::Cor) => Some(ChatModel::for_task(t.clone(), Some(task_id))?),
            _ => None,
        };
        Ok(Self { learner, teacher })
    }

    fn total_calls(&self) -> usize {
        self.learner.calls() + self.teacher.as_ref().map_or(0, ChatModel::calls)
    }
}

/// If a learner returns only a function body for a prompt-style task (the
/// description holds the signature), prepend the description.
pub fn assemble_program(task: &Task, code: &str) -> String {
    match &task.entry_point {
        Some(ep) if !defines(code, ep) && defines(&task.description, ep) => {
            format!("{}\n{}", task.description.trim_end(), code)
        }
        _ => code.to_string(),
    }
}

fn defines(code: &str, name: &str) -> bool {
    code.lines().any(|l| {
        let t = l.trim_start();
        t.strip_prefix("def ")
            .or_else(|| t.strip_prefix("async def "))
            .is_some_and(|rest| rest.trim_start().starts_with(name) && rest.trim_start()[name.len()..].trim_start().starts_with('('))
    })
}

enum Abort {
    Model(AgentError),
    Runner(String),
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Abort::Model(e) => write!(f, "model error: {e}"),
            Abort::Runner(m) => write!(f, "runner error: {m}"),
        }
    }
}

fn runner_failure(report: &ExecutionReport) -> Option<String> {
    (report.verdict == Verdict::RunnerError).then(|| {
        report
            .error
            .as_ref()
            .map(|e| e.description.clone())
            .unwrap_or_else(|| "runner error".into())
    })
}

/// Runs one episode to completion. Never fails: model or runner errors end
/// the episode as `Unresolved` with `abort_reason` set.
pub fn run_episode(
    input: &EpisodeInput,
    config: &RepairConfig,
    executor: &dyn Executor,
    agents: &EpisodeAgents,
    catalog: &TemplateCatalog,
) -> Trajectory {
    let started = Instant::now();
    let task = input.task();
    let mut traj = Trajectory {
        task_id: task.task_id.clone(),
        mode: config.mode,
        include_generation: config.include_generation,
        turns: Vec::new(),
        final_verdict: FinalVerdict::Unresolved,
        model_calls: 0,
        wall_time: 0.0,
        abort_reason: None,
    };
    let mut teacher = agents
        .teacher
        .as_ref()
        .map(|m| Teacher::new(m, catalog, config.teacher_sees_description, config.teacher_history));

    if let Err(abort) = drive(input, config, executor, agents, catalog, teacher.as_mut(), &mut traj) {
        log::warn!("{}: episode aborted: {abort}", task.task_id);
        traj.abort_reason = Some(abort.to_string());
    }
    traj.model_calls = agents.total_calls();
    traj.final_verdict = if traj.last_report().is_some_and(ExecutionReport::passed) {
        FinalVerdict::Passed
    } else {
        FinalVerdict::Unresolved
    };
    traj.wall_time = started.elapsed().as_secs_f64();
    traj
}

fn drive(
    input: &EpisodeInput,
    config: &RepairConfig,
    executor: &dyn Executor,
    agents: &EpisodeAgents,
    catalog: &TemplateCatalog,
    mut teacher: Option<&mut Teacher<'_>>,
    traj: &mut Trajectory,
) -> Result<(), Abort> {
    let task = input.task();
    let lang = task.language.as_str();
    let learner = &agents.learner;

    let before = agents.total_calls();
    let initial = match input {
        EpisodeInput::Repair(entry) if !config.include_generation => entry.buggy_code.clone(),
        _ => {
            let ctx = context(&[("description", &task.description)]);
            let reply = learner_call(learner, catalog, config.generation_mode, &ctx, lang).map_err(Abort::Model)?;
            assemble_program(task, &reply.code)
        }
    };
    let report = executor.execute(&initial, &task.tests);
    let runner = runner_failure(&report);
    traj.turns.push(TurnRecord {
        turn_index: 0,
        code: initial,
        report,
        cor: None,
        critique: None,
        calls_this_turn: agents.total_calls() - before,
    });
    if let Some(msg) = runner {
        return Err(Abort::Runner(msg));
    }

    while traj.repair_turns() < config.max_turns {
        let last = traj.turns.last().expect("initial turn recorded");
        if last.report.passed() {
            break;
        }
        let code = last.code.clone();
        let report = last.report.clone();
        let before = agents.total_calls();
        let mut cor = None;
        let mut critique = None;

        let reply = match config.mode {
            RepairMode::Cor => {
                let teacher = teacher
                    .as_deref_mut()
                    .ok_or_else(|| Abort::Model(AgentError::Config("CoR mode requires a teacher".into())))?;
                let c = teacher.cor(task, &code, &report).map_err(Abort::Model)?;
                let ctx = context(&[("description", &task.description), ("code", &code), ("cor", &c.raw)]);
                cor = Some(c);
                learner_call(learner, catalog, PromptMode::LearnerApplyCor, &ctx, lang)
            }
            RepairMode::SelfRefine => {
                let ctx = context(&[("description", &task.description), ("code", &code)]);
                let plan = plain_call(learner, catalog, PromptMode::SelfRefinePlan, &ctx).map_err(Abort::Model)?;
                let ctx = context(&[("description", &task.description), ("code", &code), ("cor", &plan)]);
                critique = Some(plan);
                learner_call(learner, catalog, PromptMode::SelfRefineApply, &ctx, lang)
            }
            RepairMode::ErrorMsgs => {
                let feedback = feedback_text(&report, MAX_FEEDBACK_CHARS);
                let ctx = context(&[
                    ("description", &task.description),
                    ("code", &code),
                    ("error_message", &feedback),
                ]);
                learner_call(learner, catalog, PromptMode::ErrorMsgsRepair, &ctx, lang)
            }
            RepairMode::RepairZeroShot | RepairMode::RepairFewShot | RepairMode::RepairCot => {
                let mode = match config.mode {
                    RepairMode::RepairZeroShot => PromptMode::RepairZeroShot,
                    RepairMode::RepairFewShot => PromptMode::RepairFewShot,
                    _ => PromptMode::RepairCot,
                };
                let ctx = context(&[("description", &task.description), ("code", &code)]);
                learner_call(learner, catalog, mode, &ctx, lang)
            }
        }
        .map_err(Abort::Model)?;

        let new_code = assemble_program(task, &reply.code);
        let new_report = executor.execute(&new_code, &task.tests);
        let runner = runner_failure(&new_report);
        traj.turns.push(TurnRecord {
            turn_index: traj.turns.len(),
            code: new_code,
            report: new_report,
            cor,
            critique,
            calls_this_turn: agents.total_calls() - before,
        });
        if let Some(msg) = runner {
            return Err(Abort::Runner(msg));
        }
    }
    Ok(())
}

fn context<'a>(pairs: &[(&'a str, &str)]) -> BTreeMap<&'a str, String> {
    pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, ErrorMessage, TestSuite};
    use crate::sandbox::ErrorType;
    use std::sync::Mutex;

    /// Passes exactly the programs containing "FIXED".
    struct FakeExec {
        seen: Mutex<Vec<String>>,
    }

    impl FakeExec {
        fn new() -> Self {
            Self { seen: Mutex::new(Vec::new()) }
        }
    }

    impl Executor for FakeExec {
        fn execute(&self, code: &str, _suite: &TestSuite) -> ExecutionReport {
            self.seen.lock().unwrap().push(code.to_string());
            let ok = code.contains("FIXED");
            ExecutionReport {
                verdict: if ok { Verdict::Passed } else { Verdict::Failed },
                error: (!ok).then(|| ErrorMessage::new(ErrorType::AssertionError, "AssertionError\nfailed test #0: assert f()")),
                failing_case_index: (!ok).then_some(0),
                raw_stdout: String::new(),
                raw_stderr: String::new(),
                wall_time: 0.0,
            }
        }
    }

    fn task() -> Task {
        Task {
            task_id: "t".into(),
            description: "d".into(),
            entry_point: None,
            tests: TestSuite::assertions(["assert f()"]),
            category: Category::Basic,
            language: "python".into(),
        }
    }

    fn cfg(mode: RepairMode, learner: Vec<&str>, teacher: Vec<&str>) -> RepairConfig {
        RepairConfig {
            mode,
            learner: ChatModelConfig::scripted(learner),
            teacher: Some(ChatModelConfig::scripted(teacher)),
            ..RepairConfig::default()
        }
    }

    fn run(config: &RepairConfig, input: &EpisodeInput) -> Trajectory {
        let agents = EpisodeAgents::from_config(config, input.task_id()).unwrap();
        let t = run_episode(input, config, &FakeExec::new(), &agents, &TemplateCatalog::builtin());
        t.check_invariants(config).unwrap();
        t
    }

    #[test]
    fn immediate_success() {
        let c = cfg(RepairMode::Cor, vec!["FIXED"], vec![]);
        let t = run(&c, &EpisodeInput::Generate(task()));
        assert_eq!(t.repair_turns(), 0);
        assert_eq!(t.final_verdict, FinalVerdict::Passed);
        assert_eq!(t.model_calls, 1);
    }

    #[test]
    fn one_cor_turn() {
        let c = cfg(RepairMode::Cor, vec!["bug", "FIXED"], vec!["Reason: r. Fix: p"]);
        let t = run(&c, &EpisodeInput::Generate(task()));
        assert_eq!(t.repair_turns(), 1);
        assert!(t.passed());
        assert_eq!(t.model_calls, 3);
        assert_eq!(t.turns[1].cor.as_ref().unwrap().plan, "p");
        assert_eq!(t.turns[1].calls_this_turn, 2);
    }

    #[test]
    fn never_fixing_stops_at_max_turns() {
        let c = cfg(RepairMode::Cor, vec!["bug"; 6], vec!["no idea"; 5]);
        let t = run(&c, &EpisodeInput::Generate(task()));
        assert_eq!(t.repair_turns(), 5);
        assert_eq!(t.final_verdict, FinalVerdict::Unresolved);
        assert_eq!(t.model_calls, 11);
        assert!(t.abort_reason.is_none());
    }

    #[test]
    fn call_accounting_per_mode_without_generation() {
        let entry = CodeErrorEntry {
            task: task(),
            buggy_code: "bug".into(),
            error: ErrorMessage::new(ErrorType::AssertionError, "x"),
            provenance: crate::corpus::Provenance::ModelGenerated,
        };
        for turns in 1..=3 {
            for mode in RepairMode::ALL {
                let mut c = cfg(mode, vec!["bug"; 2 * turns], vec!["c"; turns]);
                c.max_turns = turns;
                c.include_generation = false;
                let t = run(&c, &EpisodeInput::Repair(entry.clone()));
                assert_eq!(t.repair_turns(), turns);
                assert_eq!(t.model_calls, mode.calls_per_turn() * turns, "{mode} {turns}");
            }
        }
    }

    #[test]
    fn zero_turns_is_plain_generation() {
        let mut c = cfg(RepairMode::Cor, vec!["bug"], vec![]);
        c.max_turns = 0;
        let t = run(&c, &EpisodeInput::Generate(task()));
        assert_eq!(t.turns.len(), 1);
        assert_eq!(t.model_calls, 1);
        assert_eq!(t.final_verdict, FinalVerdict::Unresolved);
    }

    #[test]
    fn exhausted_script_aborts_unresolved() {
        let c = cfg(RepairMode::Cor, vec!["bug"], vec!["c"]);
        let agents = EpisodeAgents::from_config(&c, "t").unwrap();
        let t = run_episode(&EpisodeInput::Generate(task()), &c, &FakeExec::new(), &agents, &TemplateCatalog::builtin());
        assert_eq!(t.final_verdict, FinalVerdict::Unresolved);
        assert!(t.abort_reason.as_ref().unwrap().contains("script exhausted"));
        assert_eq!(t.turns.len(), 1);
        // teacher answered, learner call failed: both invocations are counted
        assert_eq!(t.model_calls, 3);
    }

    #[test]
    fn self_refine_records_critique() {
        let c = cfg(RepairMode::SelfRefine, vec!["bug", "looks wrong", "FIXED"], vec![]);
        let t = run(&c, &EpisodeInput::Generate(task()));
        assert_eq!(t.turns[1].critique.as_deref(), Some("looks wrong"));
        assert!(t.turns[1].cor.is_none());
        assert_eq!(t.model_calls, 3);
    }

    #[test]
    fn cor_requires_teacher() {
        let mut c = cfg(RepairMode::Cor, vec![], vec![]);
        c.teacher = None;
        assert!(matches!(c.validate(), Err(ConfigError::MissingTeacher)));
        c.mode = RepairMode::ErrorMsgs;
        assert!(c.validate().is_ok());
        c.generation_mode = PromptMode::TeacherCor;
        assert!(c.validate().is_err());
    }

    #[test]
    fn body_only_completion_gets_prompt_prepended() {
        let mut t = task();
        t.entry_point = Some("add".into());
        t.description = "def add(a, b):\n    \"\"\"Add.\"\"\"\n".into();
        assert_eq!(assemble_program(&t, "    return a + b"), "def add(a, b):\n    \"\"\"Add.\"\"\"\n    return a + b");
        let full = "def add(a, b):\n    return a + b";
        assert_eq!(assemble_program(&t, full), full);
        assert!(!defines("def adder(a): pass", "add"));
    }

    #[test]
    fn modes_parse() {
        for m in RepairMode::ALL {
            assert_eq!(m.as_str().parse::<RepairMode>().unwrap(), m);
        }
        assert!("bogus".parse::<RepairMode>().is_err());
    }
}
