//! The engine configuration file (TOML) and its validation.

use std::fs;
use std::path::{Path, PathBuf};

use corepair::agents::{ChatModel, PromptMode, TemplateCatalog};
use corepair::repair::{RepairConfig, RepairMode, DEFAULT_MAX_TURNS};
use corepair::sandbox::Sandbox;
use corepair::{ChatModelConfig, ExecLimits, RunnerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Defaults for the repair loop; flags override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepairSection {
    pub max_turns: usize,
    pub mode: RepairMode,
    pub generation_mode: PromptMode,
    pub teacher_sees_description: bool,
    pub teacher_history: bool,
}

impl Default for RepairSection {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            mode: RepairMode::Cor,
            generation_mode: PromptMode::ZeroShot,
            teacher_sees_description: true,
            teacher_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub learner: ChatModelConfig,
    pub teacher: ChatModelConfig,
    pub runner: RunnerConfig,
    pub limits: ExecLimits,
    pub repair: RepairSection,
    /// Directory whose `<mode>.txt` files replace the built-in templates.
    pub template_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Concurrent episodes; 0 means one per CPU.
    pub parallelism: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            learner: ChatModelConfig::default(),
            teacher: ChatModelConfig::default(),
            runner: RunnerConfig::default(),
            limits: ExecLimits::default(),
            repair: RepairSection::default(),
            template_dir: None,
            output_dir: PathBuf::from("runs"),
            parallelism: 1,
        }
    }
}

impl EngineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: EngineConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
        // relative template paths are resolved against the config file
        if let (Some(dir), Some(base)) = (&cfg.template_dir, path.parent()) {
            if dir.is_relative() {
                cfg.template_dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn repair_config(&self, include_generation: bool) -> RepairConfig {
        RepairConfig {
            max_turns: self.repair.max_turns,
            mode: self.repair.mode,
            include_generation,
            generation_mode: self.repair.generation_mode,
            learner: self.learner.clone(),
            teacher: Some(self.teacher.clone()),
            limits: self.limits.clone(),
            teacher_sees_description: self.repair.teacher_sees_description,
            teacher_history: self.repair.teacher_history,
        }
    }

    pub fn catalog(&self) -> Result<TemplateCatalog, CliError> {
        match &self.template_dir {
            Some(dir) => TemplateCatalog::from_dir(dir).map_err(|e| CliError::Usage(format!("templates: {e}"))),
            None => Ok(TemplateCatalog::builtin()),
        }
    }

    pub fn sandbox(&self) -> Result<Sandbox, CliError> {
        Sandbox::new(self.runner.clone(), self.limits.clone()).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Everything a model-driven run needs, checked before any work starts:
    /// settings and that credentials are present.
    pub fn validate_for_models(&self, config: &RepairConfig) -> Result<(), CliError> {
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        ChatModel::new(config.learner.clone()).map_err(|e| CliError::Usage(format!("learner: {e}")))?;
        if config.mode == RepairMode::Cor && config.max_turns > 0 {
            if let Some(t) = &config.teacher {
                ChatModel::new(t.clone()).map_err(|e| CliError::Usage(format!("teacher: {e}")))?;
            }
        }
        Ok(())
    }
}
