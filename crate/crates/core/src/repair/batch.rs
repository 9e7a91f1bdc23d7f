//! Running many episodes and persisting them as they finish.
//!
//! Layout under the output directory:
//!
//! ```text
//! trajectories/<encoded task_id>.json   one file per episode
//! manifest.jsonl                        one summary row per episode
//! ```
//!
//! With `resume`, items whose trajectory file already exists are loaded
//! instead of re-run.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{run_episode, EpisodeAgents, EpisodeInput, FinalVerdict, RepairConfig, Trajectory};
use crate::agents::{AgentError, TemplateCatalog};
use crate::pool::map_ordered;
use crate::sandbox::Executor;

pub const TRAJECTORY_DIR: &str = "trajectories";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate task_id '{0}' in batch")]
    DuplicateTask(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub task_id: String,
    pub final_verdict: FinalVerdict,
    pub repair_turns: usize,
    pub model_calls: usize,
    pub wall_time: f64,
}

impl From<&Trajectory> for ManifestRow {
    fn from(t: &Trajectory) -> Self {
        Self {
            task_id: t.task_id.clone(),
            final_verdict: t.final_verdict,
            repair_turns: t.repair_turns(),
            model_calls: t.model_calls,
            wall_time: t.wall_time,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// Worker threads; 0 means one per CPU.
    pub parallelism: usize,
    pub out_dir: Option<PathBuf>,
    pub resume: bool,
}

#[derive(Debug)]
pub struct BatchOutcome {
    /// In input order.
    pub trajectories: Vec<Trajectory>,
    /// How many were loaded from disk rather than run.
    pub resumed: usize,
}

/// File name for a task's trajectory. Characters outside `[A-Za-z0-9_-]` are
/// written as `%XX`, so distinct ids never share a file.
pub fn trajectory_file_name(task_id: &str) -> String {
    let mut out = String::with_capacity(task_id.len() + 5);
    for b in task_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out.push_str(".json");
    out
}

pub fn write_trajectory(dir: &Path, t: &Trajectory) -> Result<PathBuf, BatchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(trajectory_file_name(&t.task_id));
    let tmp = path.with_extension("json.partial");
    let body = serde_json::to_string_pretty(t).map_err(|source| BatchError::Json { path: path.clone(), source })?;
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(path)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, BatchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| BatchError::Json { path: path.to_path_buf(), source })
}

/// Loads every `*.json` trajectory in `dir`, sorted by task_id.
pub fn load_trajectories(dir: &Path) -> Result<Vec<Trajectory>, BatchError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(load_trajectory(&path)?);
        }
    }
    out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRow>, BatchError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|source| BatchError::Json { path: path.to_path_buf(), source })?);
    }
    Ok(rows)
}

fn resumable(dir: &Path, task_id: &str) -> Option<Trajectory> {
    let path = dir.join(trajectory_file_name(task_id));
    if !path.exists() {
        return None;
    }
    match load_trajectory(&path) {
        Ok(t) if t.task_id == task_id => Some(t),
        Ok(_) | Err(_) => {
            log::warn!("{}: unreadable or mismatched, re-running", path.display());
            None
        }
    }
}

type AgentFactory<'a> = dyn Fn(&EpisodeInput) -> Result<EpisodeAgents, AgentError> + Sync + 'a;

/// Runs one episode per item. A failure inside one item (agent construction,
/// a panic) yields an aborted trajectory for that item only.
pub fn run_batch(
    items: &[EpisodeInput],
    config: &RepairConfig,
    executor: &dyn Executor,
    catalog: &TemplateCatalog,
    agents: &AgentFactory<'_>,
    options: &BatchOptions,
) -> Result<BatchOutcome, BatchError> {
    let mut seen = std::collections::HashSet::new();
    for item in items {
        if !seen.insert(item.task_id()) {
            return Err(BatchError::DuplicateTask(item.task_id().to_string()));
        }
    }

    let traj_dir = options.out_dir.as_ref().map(|d| d.join(TRAJECTORY_DIR));
    let manifest = match &options.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(MANIFEST_FILE);
            let file = OpenOptions::new()
                .create(true)
                .write(true)
                .append(options.resume)
                .truncate(!options.resume)
                .open(&path)
                .map_err(io_err(&path))?;
            Some((path, Mutex::new(file)))
        }
        None => None,
    };
    let failures: Mutex<Vec<BatchError>> = Mutex::new(Vec::new());

    let workers = if options.parallelism == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        options.parallelism
    };

    let results = map_ordered(items, workers, |_, item| {
        if options.resume {
            if let Some(t) = traj_dir.as_deref().and_then(|d| resumable(d, item.task_id())) {
                return (t, true);
            }
        }
        let traj = catch_unwind(AssertUnwindSafe(|| match agents(item) {
            Ok(a) => run_episode(item, config, executor, &a, catalog),
            Err(e) => Trajectory::aborted_without_turns(
                item.task_id(),
                config.mode,
                config.include_generation,
                format!("agent setup failed: {e}"),
            ),
        }))
        .unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            Trajectory::aborted_without_turns(item.task_id(), config.mode, config.include_generation, format!("panic: {msg}"))
        });

        if let (Some(dir), Some((path, file))) = (&traj_dir, &manifest) {
            let persisted = write_trajectory(dir, &traj).and_then(|_| {
                let row = serde_json::to_string(&ManifestRow::from(&traj)).expect("manifest row serializes");
                let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
                writeln!(f, "{row}").and_then(|_| f.flush()).map_err(io_err(path))
            });
            if let Err(e) = persisted {
                failures.lock().unwrap_or_else(|e| e.into_inner()).push(e);
            }
        }
        log::info!("{}: {:?} after {} turns", traj.task_id, traj.final_verdict, traj.repair_turns());
        (traj, false)
    });

    if let Some(e) = failures.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().next() {
        return Err(e);
    }
    let resumed = results.iter().filter(|(_, r)| *r).count();
    Ok(BatchOutcome {
        trajectories: results.into_iter().map(|(t, _)| t).collect(),
        resumed,
    })
}
