use std::fs;
use std::path::{Path, PathBuf};

use corepair::agents::PromptMode;
use corepair::builder::{build_code_error, load_candidates, stats, BuildError};
use corepair::corpus::{load_code_error, load_tasks, write_code_error, LoadOptions, TaskFormat};
use corepair::metrics::{aggregate, render_report, write_reports, ReportFormat};
use corepair::repair::{
    load_trajectories, run_batch, BatchOptions, EpisodeAgents, EpisodeInput, RepairConfig, RepairMode, TRAJECTORY_DIR,
};
use corepair::{CodeErrorSet, TaskSet};

use crate::config::EngineConfig;
use crate::{Cli, CliError, Command, Common, TaskInput};

pub fn run(cli: Cli) -> Result<u8, CliError> {
    let mut cfg = EngineConfig::load(cli.common.config.as_deref())?;
    apply_overrides(&mut cfg, &cli.common);
    match cli.command {
        Command::Generate { input } => {
            cfg.repair.generation_mode = generation_mode(&cfg, &cli.common)?;
            let tasks = read_tasks(&input)?;
            let mut rc = cfg.repair_config(true);
            rc.max_turns = 0;
            rc.teacher = None;
            let items = tasks.tasks.into_iter().map(EpisodeInput::Generate).collect();
            run_episodes(&cfg, rc, items, None, cli.common.resume)
        }
        Command::Repair { tasks, code_error, format, eval_slice } => {
            if let Some(m) = &cli.common.mode {
                cfg.repair.mode = m.parse::<RepairMode>().map_err(CliError::Usage)?;
            }
            let (items, entries, generate) = match (tasks, code_error) {
                (Some(path), _) => {
                    let set = read_tasks(&TaskInput { tasks: path, format, eval_slice })?;
                    (set.tasks.into_iter().map(EpisodeInput::Generate).collect(), None, true)
                }
                (None, Some(path)) => {
                    let set = read_code_error(&path)?;
                    (set.entries.iter().cloned().map(EpisodeInput::Repair).collect(), Some(set), false)
                }
                (None, None) => return Err(CliError::Usage("one of --tasks or --code-error is required".into())),
            };
            let rc = cfg.repair_config(generate);
            run_episodes(&cfg, rc, items, entries.as_ref(), cli.common.resume)
        }
        Command::Eval { trajectories, code_error } => {
            let (traj_dir, run_root) = locate_trajectories(&trajectories)?;
            let trajs = load_trajectories(&traj_dir).map_err(|e| CliError::Usage(e.to_string()))?;
            if trajs.is_empty() {
                return Err(CliError::Usage(format!("no trajectories in {}", traj_dir.display())));
            }
            let entries = code_error.as_deref().map(read_code_error).transpose()?;
            let report = aggregate(&trajs, entries.as_ref()).map_err(|e| CliError::Usage(e.to_string()))?;
            let out = cli.common.out.unwrap_or(run_root);
            write_reports(&report, &out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
            print!("{}", render_report(&report, ReportFormat::PlainTable));
            Ok(0)
        }
        Command::Build { input, candidates } => {
            let tasks = read_tasks(&input)?;
            let cands = load_candidates(&candidates).map_err(|e| CliError::Usage(e.to_string()))?;
            let sandbox = cfg.sandbox()?;
            let outcome = build_code_error(&tasks, &cands, &sandbox, cfg.parallelism.max(1)).map_err(|e| match e {
                BuildError::UnknownTask(_) => CliError::Usage(e.to_string()),
                other => CliError::Failed(other.to_string()),
            })?;
            let out = &cfg.output_dir;
            fs::create_dir_all(out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
            write_code_error(&outcome.set, &out.join("code_error.jsonl")).map_err(|e| CliError::Failed(e.to_string()))?;
            let table = stats(&outcome.set);
            let csv = out.join("stats.csv");
            table.write_csv(&csv).map_err(|e| CliError::Failed(format!("{}: {e}", csv.display())))?;
            if outcome.set.is_empty() {
                log::warn!("every candidate passed or could not run; the benchmark is empty");
            }
            print!("{}", table.to_table());
            eprintln!(
                "{} entries, {} passed, {} runner errors, {} duplicates",
                outcome.set.len(),
                outcome.passed,
                outcome.runner_errors,
                outcome.duplicates
            );
            Ok(u8::from(outcome.runner_errors > 0))
        }
        Command::Stats { code_error } => {
            let set = read_code_error(&code_error)?;
            if set.is_empty() {
                return Err(CliError::Usage(format!("{} has no entries", code_error.display())));
            }
            let table = stats(&set);
            if let Some(out) = &cli.common.out {
                fs::create_dir_all(out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
                let csv = out.join("stats.csv");
                table.write_csv(&csv).map_err(|e| CliError::Failed(format!("{}: {e}", csv.display())))?;
            }
            print!("{}", table.to_table());
            Ok(0)
        }
    }
}

/// The prompting mode for `generate`: `--mode` if given, else the config.
fn generation_mode(cfg: &EngineConfig, common: &Common) -> Result<PromptMode, CliError> {
    let Some(m) = &common.mode else {
        return Ok(cfg.repair.generation_mode);
    };
    let mode: PromptMode = m.parse().map_err(CliError::Usage)?;
    if !mode.is_generation() {
        return Err(CliError::Usage(format!("'{m}' is not a generation prompting mode")));
    }
    Ok(mode)
}

fn apply_overrides(cfg: &mut EngineConfig, common: &Common) {
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(p) = common.parallelism {
        cfg.parallelism = p;
    }
    if let Some(t) = common.max_turns {
        cfg.repair.max_turns = t;
    }
}

fn read_tasks(input: &TaskInput) -> Result<TaskSet, CliError> {
    let format: TaskFormat = input.format.parse().map_err(CliError::Usage)?;
    load_tasks(&input.tasks, format, LoadOptions { eval_slice: input.eval_slice })
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn read_code_error(path: &Path) -> Result<CodeErrorSet, CliError> {
    let loaded = load_code_error(path).map_err(|e| CliError::Usage(e.to_string()))?;
    for w in &loaded.warnings {
        log::warn!("{}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(loaded.value)
}

/// Accepts either a run directory or its `trajectories/` subdirectory.
fn locate_trajectories(path: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    if !path.is_dir() {
        return Err(CliError::Usage(format!("trajectory directory {} does not exist", path.display())));
    }
    let nested = path.join(TRAJECTORY_DIR);
    if nested.is_dir() {
        return Ok((nested, path.to_path_buf()));
    }
    let root = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    Ok((path.to_path_buf(), root.to_path_buf()))
}

fn run_episodes(
    cfg: &EngineConfig,
    rc: RepairConfig,
    items: Vec<EpisodeInput>,
    entries: Option<&CodeErrorSet>,
    resume: bool,
) -> Result<u8, CliError> {
    cfg.validate_for_models(&rc)?;
    let catalog = cfg.catalog()?;
    let sandbox = cfg.sandbox()?;
    if items.is_empty() {
        return Err(CliError::Usage("input has no tasks".into()));
    }
    let opts = BatchOptions {
        parallelism: cfg.parallelism,
        out_dir: Some(cfg.output_dir.clone()),
        resume,
    };
    let outcome = run_batch(&items, &rc, &sandbox, &catalog, &|item| EpisodeAgents::from_config(&rc, item.task_id()), &opts)
        .map_err(|e| match e {
            corepair::repair::BatchError::DuplicateTask(_) => CliError::Usage(e.to_string()),
            other => CliError::Failed(other.to_string()),
        })?;
    let report = aggregate(&outcome.trajectories, entries).map_err(|e| CliError::Failed(e.to_string()))?;
    write_reports(&report, &cfg.output_dir).map_err(|e| CliError::Failed(format!("{}: {e}", cfg.output_dir.display())))?;
    print!("{}", render_report(&report, ReportFormat::PlainTable));

    let aborted: Vec<_> = outcome.trajectories.iter().filter(|t| t.aborted()).collect();
    for t in &aborted {
        eprintln!("{}: {}", t.task_id, t.abort_reason.as_deref().unwrap_or_default());
    }
    if outcome.resumed > 0 {
        eprintln!("{} tasks resumed from {}", outcome.resumed, cfg.output_dir.display());
    }
    Ok(u8::from(!aborted.is_empty()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;
    use std::collections::BTreeMap;

    fn common(args: &[&str]) -> Common {
        let mut argv = vec!["corepair"];
        argv.extend_from_slice(args);
        argv.extend_from_slice(&["generate", "--tasks", "t.jsonl"]);
        Cli::try_parse_from(argv).unwrap().common
    }

    #[test]
    fn zero_shot_cot_flag_selects_the_cot_template() {
        let cfg = EngineConfig::default();
        let mode = generation_mode(&cfg, &common(&["--mode", "zero-shot-cot"])).unwrap();
        assert_eq!(mode, PromptMode::ZeroShotCot);
        let ctx = BTreeMap::from([("description", "Add two numbers.".to_string())]);
        let prompt = cfg.catalog().unwrap().render(mode, &ctx).unwrap();
        assert!(prompt.user.contains("step by step"), "{}", prompt.user);
        let plain = cfg.catalog().unwrap().render(PromptMode::ZeroShot, &ctx).unwrap();
        assert!(!plain.user.contains("step by step"));
    }

    #[test]
    fn repair_modes_are_not_generation_modes() {
        let cfg = EngineConfig::default();
        assert!(generation_mode(&cfg, &common(&["--mode", "teacher_cor"])).is_err());
        assert!(generation_mode(&cfg, &common(&["--mode", "nonsense"])).is_err());
        assert_eq!(generation_mode(&cfg, &common(&[])).unwrap(), PromptMode::ZeroShot);
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = EngineConfig::default();
        apply_overrides(&mut cfg, &common(&["--out", "x", "--parallelism", "7", "--max-turns", "1"]));
        assert_eq!(cfg.output_dir, PathBuf::from("x"));
        assert_eq!(cfg.parallelism, 7);
        assert_eq!(cfg.repair.max_turns, 1);
    }
}
