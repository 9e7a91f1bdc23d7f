//! Acceptance criteria, one PASS/FAIL/SKIP line each.
//!
//! Runs as a plain binary (no libtest harness) so the lines always show up in
//! `cargo test` output. Exits non-zero if any criterion fails.
//!
//! The live check needs `COREPAIR_LIVE_HUMANEVAL` (path to HumanEval JSONL)
//! and the API key named by `COREPAIR_LIVE_KEY_ENV` (default
//! `OPENAI_API_KEY`); without them it is skipped.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use corepair::agents::{ChatModelConfig, TemplateCatalog};
use corepair::builder::{build_code_error, load_candidates, stats, STATS_COLUMNS};
use corepair::corpus::{load_tasks, CodeErrorEntry, LoadOptions, Provenance, TaskFormat};
use corepair::metrics::{aggregate, pass_at_k};
use corepair::repair::{
    load_trajectory, run_batch, run_episode, write_trajectory, BatchOptions, EpisodeAgents, EpisodeInput, FinalVerdict,
    RepairConfig, RepairMode,
};
use corepair::sandbox::{Executor, Sandbox};
use corepair::{Category, ErrorMessage, ErrorType, ExecLimits, ExecutionReport, Task, TestSuite, Verdict};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn within(started: Instant, budget: Duration, detail: String) -> Outcome {
    let took = started.elapsed();
    if took <= budget {
        Outcome::Pass(format!("{detail}; {:.2}s", took.as_secs_f64()))
    } else {
        Outcome::Fail(format!("{detail}; took {:.2}s, budget {}s", took.as_secs_f64(), budget.as_secs()))
    }
}

// 1 ------------------------------------------------------------------------

fn enumerate_pass_at_k(n: usize, c: usize, k: usize) -> f64 {
    let (mut hit, mut all) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            all += 1;
            if mask & ((1u32 << c) - 1) != 0 {
                hit += 1;
            }
        }
    }
    hit as f64 / all as f64
}

fn pass_at_k_oracle() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 1..=10 {
        for c in 0..=n {
            for k in 1..=n {
                let got = match pass_at_k(n, c, k) {
                    Ok(v) => v,
                    Err(e) => return Outcome::Fail(format!("n={n} c={c} k={k}: {e}")),
                };
                worst = worst.max((got - enumerate_pass_at_k(n, c, k)).abs());
                cases += 1;
            }
        }
    }
    if worst >= 1e-12 {
        return Outcome::Fail(format!("max deviation {worst:e} over {cases} cases"));
    }
    within(started, Duration::from_secs(1), format!("{cases} cases, max deviation {worst:e}"))
}

// 2 ------------------------------------------------------------------------

const TAXONOMY: &[(ErrorType, &str)] = &[
    (ErrorType::AssertionError, "def f():\n    return 1\nassert f() == 2\n"),
    (ErrorType::NameError, "import hashlib\nprint(hashlib.md5(b'x').hexdigest())\nprint(undefined_name)\n"),
    (ErrorType::TypeError, "x = 'a' + 1\n"),
    (ErrorType::IndexError, "xs = [1, 2]\nprint(xs[5])\n"),
    (ErrorType::ValueError, "int('twelve')\n"),
    (ErrorType::SyntaxError, "def f(:\n    pass\n"),
    (ErrorType::AttributeError, "x = 3\nx.append(4)\n"),
    (ErrorType::RecursionError, "def f(n):\n    return f(n + 1)\nf(0)\n"),
    (ErrorType::Timeout, "while True:\n    pass\n"),
    (ErrorType::Other, "d = {}\nprint(d['missing'])\n"),
    (ErrorType::Other, "print(1 / 0)\n"),
    (ErrorType::NameError, "def g():\n    return helper()\ng()\n"),
];

fn taxonomy_coverage() -> Outcome {
    let started = Instant::now();
    let sandbox = match Sandbox::python(ExecLimits { timeout_secs: 1.0, ..ExecLimits::default() }) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let suite = TestSuite::assertions(["assert True"]);
    let mut runs: Vec<Vec<ErrorType>> = Vec::new();
    for _ in 0..3 {
        let mut got = Vec::new();
        for (expected, code) in TAXONOMY {
            let report = sandbox.execute(code, &suite);
            let ty = report.error_type();
            if ty != *expected {
                return Outcome::Fail(format!("expected {expected}, got {ty} for {code:?}: {:?}", report.error));
            }
            got.push(ty);
        }
        runs.push(got);
    }
    if runs.windows(2).any(|w| w[0] != w[1]) {
        return Outcome::Fail("classification differs between runs".into());
    }
    let mut covered: Vec<ErrorType> = TAXONOMY.iter().map(|(t, _)| *t).collect();
    covered.sort();
    covered.dedup();
    let missing: Vec<_> = ErrorType::ALL.iter().filter(|t| **t != ErrorType::Passed && !covered.contains(t)).collect();
    if !missing.is_empty() {
        return Outcome::Fail(format!("fixture misses {missing:?}"));
    }
    within(
        started,
        Duration::from_secs(30),
        format!("{} snippets x 3 runs, {} types", TAXONOMY.len(), covered.len()),
    )
}

// 3-5 ----------------------------------------------------------------------

fn add_task() -> Task {
    Task {
        task_id: "acc/add".into(),
        description: "def add(a, b):\n    \"\"\"Return a + b.\"\"\"\n".into(),
        entry_point: Some("add".into()),
        tests: TestSuite::assertions(["assert add(1, 2) == 3", "assert add(2, 2) == 4"]),
        category: Category::Basic,
        language: "python".into(),
    }
}

const BUGGY: &str = "```python\ndef add(a, b):\n    return a - b\n```";
const FIXED: &str = "```python\ndef add(a, b):\n    return a + b\n```";
const COR: &str = "Reason: the function subtracts b instead of adding it.\nFix: return a + b.";

fn scripted(mode: RepairMode, learner: Vec<&str>, teacher: Vec<&str>, max_turns: usize) -> RepairConfig {
    RepairConfig {
        max_turns,
        mode,
        learner: ChatModelConfig::scripted(learner),
        teacher: Some(ChatModelConfig::scripted(teacher)),
        limits: ExecLimits { timeout_secs: 5.0, ..ExecLimits::default() },
        ..RepairConfig::default()
    }
}

fn episode(config: &RepairConfig, input: &EpisodeInput) -> Result<corepair::Trajectory, String> {
    let sandbox = Sandbox::python(config.limits.clone()).map_err(|e| e.to_string())?;
    let agents = EpisodeAgents::from_config(config, input.task_id()).map_err(|e| e.to_string())?;
    let t = run_episode(input, config, &sandbox, &agents, &TemplateCatalog::builtin());
    t.check_invariants(config)?;
    Ok(t)
}

fn scripted_cor_episode() -> Outcome {
    let started = Instant::now();
    let config = scripted(RepairMode::Cor, vec![BUGGY, FIXED], vec![COR], 5);
    let t = match episode(&config, &EpisodeInput::Generate(add_task())) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e),
    };
    if t.final_verdict != FinalVerdict::Passed || t.repair_turns() != 1 || t.model_calls != 3 {
        return Outcome::Fail(format!(
            "verdict {:?}, {} repair turns, {} calls",
            t.final_verdict,
            t.repair_turns(),
            t.model_calls
        ));
    }
    if t.turns[0].report.error_type() != ErrorType::AssertionError {
        return Outcome::Fail(format!("first execution: {:?}", t.turns[0].report.error));
    }
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let back = write_trajectory(dir.path(), &t).and_then(|p| load_trajectory(&p));
    match back {
        Ok(b) if b == t => within(started, Duration::from_secs(10), "Passed after 1 turn, 3 calls, file round-trips".into()),
        Ok(_) => Outcome::Fail("reloaded trajectory differs".into()),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn buggy_entry() -> CodeErrorEntry {
    CodeErrorEntry {
        task: add_task(),
        buggy_code: "def add(a, b):\n    return a - b\n".into(),
        error: ErrorMessage::new(ErrorType::AssertionError, "AssertionError"),
        provenance: Provenance::ModelGenerated,
    }
}

fn call_budget() -> Outcome {
    let mut seen = Vec::new();
    for (mode, per_turn) in [(RepairMode::Cor, 2), (RepairMode::SelfRefine, 2), (RepairMode::ErrorMsgs, 1)] {
        let mut row = Vec::new();
        for t in 1..=3 {
            let mut config = scripted(mode, vec![BUGGY; 2 * t], vec![COR; t], t);
            config.include_generation = false;
            let traj = match episode(&config, &EpisodeInput::Repair(buggy_entry())) {
                Ok(x) => x,
                Err(e) => return Outcome::Fail(format!("{mode} t={t}: {e}")),
            };
            if traj.repair_turns() != t || traj.model_calls != per_turn * t || traj.aborted() {
                return Outcome::Fail(format!(
                    "{mode} t={t}: {} turns, {} calls, abort {:?}",
                    traj.repair_turns(),
                    traj.model_calls,
                    traj.abort_reason
                ));
            }
            row.push(traj.model_calls.to_string());
        }
        seen.push(format!("{mode} {}", row.join("/")));
    }
    Outcome::Pass(seen.join(", "))
}

fn stopping_rule() -> Outcome {
    let config = scripted(RepairMode::Cor, vec![BUGGY; 6], vec![COR; 5], RepairConfig::default().max_turns);
    match episode(&config, &EpisodeInput::Generate(add_task())) {
        Ok(t) if t.repair_turns() == 5 && t.final_verdict == FinalVerdict::Unresolved && !t.aborted() => {
            Outcome::Pass(format!("5 repair turns, Unresolved, {} calls", t.model_calls))
        }
        Ok(t) => Outcome::Fail(format!(
            "{} turns, {:?}, abort {:?}",
            t.repair_turns(),
            t.final_verdict,
            t.abort_reason
        )),
        Err(e) => Outcome::Fail(e),
    }
}

// 6 ------------------------------------------------------------------------

fn builder_conservation() -> Outcome {
    let started = Instant::now();
    let dir = fixtures();
    let tasks = match load_tasks(&dir.join("tasks.jsonl"), TaskFormat::Generic, LoadOptions::default()) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let cands = match load_candidates(&dir.join("candidates.jsonl")) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let plan: Vec<(String, String)> = std::fs::read_to_string(dir.join("candidates_plan.jsonl"))
        .unwrap_or_default()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).expect("plan line");
            (v["task_id"].as_str().unwrap().to_string(), v["planned"].as_str().unwrap().to_string())
        })
        .collect();
    let mut planned: Vec<(String, String)> = plan.iter().filter(|(_, p)| p != "Passed").cloned().collect();
    planned.sort();
    let planned_types: std::collections::BTreeSet<&str> = planned.iter().map(|(_, p)| p.as_str()).collect();
    if cands.len() != 10 || planned.len() != 6 || planned_types.len() < 4 {
        return Outcome::Fail("fixture does not match its plan shape".into());
    }

    let sandbox = match Sandbox::python(ExecLimits { timeout_secs: 5.0, ..ExecLimits::default() }) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let out = match build_code_error(&tasks, &cands, &sandbox, 4) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mut emitted: Vec<(String, String)> = out
        .set
        .entries
        .iter()
        .map(|e| (e.task.task_id.clone(), e.error.error_type.name().to_string()))
        .collect();
    emitted.sort();
    if emitted != planned {
        return Outcome::Fail(format!("emitted {emitted:?}, planned {planned:?}"));
    }
    if out.set.len() + out.passed + out.runner_errors + out.duplicates != cands.len() {
        return Outcome::Fail("candidates not conserved".into());
    }
    for e in &out.set.entries {
        let again = sandbox.execute(&e.buggy_code, &e.task.tests);
        if again.passed() || again.error_type() != e.error.error_type {
            return Outcome::Fail(format!("{} re-executed as {:?}", e.task.task_id, again.error_type()));
        }
    }
    let table = stats(&out.set);
    let per_cat: usize = table.rows.values().map(|r| r.problems).sum();
    let mut ok = per_cat == table.total.problems;
    for ty in STATS_COLUMNS.iter().map(|t| Some(*t)).chain([None]) {
        ok &= table.rows.values().map(|r| r.column(ty)).sum::<usize>() == table.total.column(ty);
    }
    for avg in [|r: &corepair::builder::StatsRow| r.words, |r: &corepair::builder::StatsRow| r.code_lines, |r: &corepair::builder::StatsRow| r.tests] {
        ok &= table.rows.values().map(avg).sum::<usize>() == avg(&table.total);
    }
    if !ok {
        return Outcome::Fail("stats totals differ from per-category sums".into());
    }
    within(
        started,
        Duration::from_secs(60),
        format!("6 of 10 kept ({}), all re-fail, totals consistent", planned_types.into_iter().collect::<Vec<_>>().join(" ")),
    )
}

// 7 ------------------------------------------------------------------------

/// Passes exactly the programs containing "FIXED".
struct Marker;

impl Executor for Marker {
    fn execute(&self, code: &str, _: &TestSuite) -> ExecutionReport {
        let ok = code.contains("FIXED");
        ExecutionReport {
            verdict: if ok { Verdict::Passed } else { Verdict::Failed },
            error: (!ok).then(|| ErrorMessage::new(ErrorType::AssertionError, "AssertionError")),
            failing_case_index: (!ok).then_some(0),
            raw_stdout: String::new(),
            raw_stderr: String::new(),
            wall_time: 0.0,
        }
    }
}

fn monotone_curve() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let catalog = TemplateCatalog::builtin();
    for trial in 0..100 {
        let n_tasks = rng.gen_range(1..=8);
        let max_turns = rng.gen_range(0..=5);
        let mode = RepairMode::ALL[rng.gen_range(0..RepairMode::ALL.len())];
        let mut learner = BTreeMap::new();
        let mut teacher = BTreeMap::new();
        let mut items = Vec::new();
        for i in 0..n_tasks {
            let id = format!("r{trial}/{i}");
            let need = rng.gen_range(0..=7usize);
            // self-refine spends two learner calls per turn
            let per_turn = if mode == RepairMode::SelfRefine { 2 } else { 1 };
            let mut script: Vec<String> = vec!["bug".into()];
            for turn in 1..=7 {
                for _ in 1..per_turn {
                    script.push("critique".into());
                }
                script.push(if turn >= need { "FIXED".into() } else { "bug".into() });
            }
            if need == 0 {
                script[0] = "FIXED".into();
            }
            learner.insert(id.clone(), script);
            teacher.insert(id.clone(), vec!["Reason: r\nFix: f".to_string(); 8]);
            let mut task = add_task();
            task.task_id = id;
            items.push(EpisodeInput::Generate(task));
        }
        let mut l = ChatModelConfig::scripted(Vec::<String>::new());
        l.task_scripts = learner;
        let mut t = ChatModelConfig::scripted(Vec::<String>::new());
        t.task_scripts = teacher;
        let config = RepairConfig { max_turns, mode, learner: l, teacher: Some(t), ..RepairConfig::default() };
        let opts = BatchOptions { parallelism: rng.gen_range(1..=3), ..BatchOptions::default() };
        let out = match run_batch(&items, &config, &Marker, &catalog, &|i| EpisodeAgents::from_config(&config, i.task_id()), &opts) {
            Ok(o) => o,
            Err(e) => return Outcome::Fail(format!("trial {trial}: {e}")),
        };
        let report = match aggregate(&out.trajectories, None) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(format!("trial {trial}: {e}")),
        };
        let curve = &report.per_turn_pass;
        if curve.windows(2).any(|w| w[1] < w[0]) {
            return Outcome::Fail(format!("trial {trial}: curve {curve:?} decreases"));
        }
        if curve.last().copied() != Some(report.pass_at[&1]) {
            return Outcome::Fail(format!("trial {trial}: curve ends at {:?}, pass@1 {}", curve.last(), report.pass_at[&1]));
        }
    }
    Outcome::Pass("100 randomized batches, curves non-decreasing and ending at pass@1".into())
}

// 8 ------------------------------------------------------------------------

fn live_smoke() -> Outcome {
    let Ok(data) = std::env::var("COREPAIR_LIVE_HUMANEVAL") else {
        return Outcome::Skip("set COREPAIR_LIVE_HUMANEVAL and an API key to run".into());
    };
    let key_env = std::env::var("COREPAIR_LIVE_KEY_ENV").unwrap_or_else(|_| "OPENAI_API_KEY".into());
    if std::env::var(&key_env).is_err() {
        return Outcome::Skip(format!("{key_env} is not set"));
    }
    let started = Instant::now();
    let mut tasks = match load_tasks(Path::new(&data), TaskFormat::HumanEvalJsonl, LoadOptions::default()) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    tasks.tasks.truncate(10);
    let mut model = ChatModelConfig { api_key_env: Some(key_env), ..ChatModelConfig::default() };
    if let Ok(endpoint) = std::env::var("COREPAIR_LIVE_ENDPOINT") {
        model.endpoint = endpoint;
    }
    if let Ok(name) = std::env::var("COREPAIR_LIVE_MODEL") {
        model.model_name = name;
    }
    let sandbox = match Sandbox::python(ExecLimits::default()) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let items: Vec<_> = tasks.tasks.into_iter().map(EpisodeInput::Generate).collect();
    let catalog = TemplateCatalog::builtin();
    let run = |max_turns: usize| -> Result<f64, String> {
        let config = RepairConfig {
            max_turns,
            learner: model.clone(),
            teacher: Some(model.clone()),
            ..RepairConfig::default()
        };
        let opts = BatchOptions { parallelism: 4, ..BatchOptions::default() };
        let out = run_batch(&items, &config, &sandbox, &catalog, &|i| EpisodeAgents::from_config(&config, i.task_id()), &opts)
            .map_err(|e| e.to_string())?;
        if let Some(t) = out.trajectories.iter().find(|t| t.aborted()) {
            return Err(format!("{}: {}", t.task_id, t.abort_reason.as_deref().unwrap_or_default()));
        }
        Ok(aggregate(&out.trajectories, None).map_err(|e| e.to_string())?.pass_at[&1])
    };
    let (plain, repaired) = match (run(0), run(5)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(e),
    };
    let detail = format!("no-repair pass@1 {plain:.3}, CoR pass@1 {repaired:.3}");
    if repaired >= plain {
        within(started, Duration::from_secs(15 * 60), detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    let checks: [(&str, Check); 8] = [
        ("pass@k equals subset enumeration", pass_at_k_oracle),
        ("sandbox error taxonomy coverage", taxonomy_coverage),
        ("scripted CoR episode", scripted_cor_episode),
        ("call budget per repair mode", call_budget),
        ("stopping rule at max_turns", stopping_rule),
        ("builder conservation and self-consistency", builder_conservation),
        ("monotone repair curve", monotone_curve),
        ("live smoke (optional)", live_smoke),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("acceptance {} {tag}: {name} ({detail})", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
