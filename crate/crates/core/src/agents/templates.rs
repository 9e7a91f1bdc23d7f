//! Prompt templates.
//!
//! Each mode is one text file with a `[system]` and a `[user]` section. The
//! built-in set is compiled in from `crates/core/templates/`; a template
//! directory with the same layout overrides any subset of it. Few-shot modes
//! also read `exemplars/<mode>.txt`, which fills `{examples}`.
//!
//! Placeholders are `{name}` with a lowercase name; `{{` and `}}` produce
//! literal braces. Substituted values are never rescanned.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{AgentError, Message};

/// Placeholders a template may reference.
pub const PLACEHOLDERS: [&str; 5] = ["description", "code", "error_message", "cor", "examples"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    ZeroShotCot,
    FewShot,
    FewShotCot,
    RepairZeroShot,
    RepairFewShot,
    RepairCot,
    SelfRefinePlan,
    SelfRefineApply,
    ErrorMsgsRepair,
    TeacherCor,
    LearnerApplyCor,
}

impl PromptMode {
    pub const ALL: [PromptMode; 12] = [
        PromptMode::ZeroShot,
        PromptMode::ZeroShotCot,
        PromptMode::FewShot,
        PromptMode::FewShotCot,
        PromptMode::RepairZeroShot,
        PromptMode::RepairFewShot,
        PromptMode::RepairCot,
        PromptMode::SelfRefinePlan,
        PromptMode::SelfRefineApply,
        PromptMode::ErrorMsgsRepair,
        PromptMode::TeacherCor,
        PromptMode::LearnerApplyCor,
    ];

    /// Modes usable for initial generation.
    pub const GENERATION: [PromptMode; 4] = [
        PromptMode::ZeroShot,
        PromptMode::ZeroShotCot,
        PromptMode::FewShot,
        PromptMode::FewShotCot,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::ZeroShotCot => "zero_shot_cot",
            PromptMode::FewShot => "few_shot",
            PromptMode::FewShotCot => "few_shot_cot",
            PromptMode::RepairZeroShot => "repair_zero_shot",
            PromptMode::RepairFewShot => "repair_few_shot",
            PromptMode::RepairCot => "repair_cot",
            PromptMode::SelfRefinePlan => "self_refine_plan",
            PromptMode::SelfRefineApply => "self_refine_apply",
            PromptMode::ErrorMsgsRepair => "error_msgs_repair",
            PromptMode::TeacherCor => "teacher_cor",
            PromptMode::LearnerApplyCor => "learner_apply_cor",
        }
    }

    pub fn is_generation(self) -> bool {
        PromptMode::GENERATION.contains(&self)
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        PromptMode::ALL
            .into_iter()
            .find(|m| m.file_stem() == key)
            .ok_or_else(|| format!("unknown prompt mode '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub mode: PromptMode,
    pub system_text: String,
    pub user_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn messages(&self) -> Vec<Message> {
        vec![Message::system(&self.system), Message::user(&self.user)]
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{|\}\}|\{([a-z_]+)\}").unwrap())
}

fn substitute(text: &str, context: &BTreeMap<&str, String>) -> Result<String, AgentError> {
    let mut out = String::with_capacity(text.len() + 256);
    let mut last = 0;
    for caps in placeholder_re().captures_iter(text) {
        let m = caps.get(0).unwrap();
        out.push_str(&text[last..m.start()]);
        match caps.get(1) {
            Some(name) => match context.get(name.as_str()) {
                Some(v) => out.push_str(v),
                None => return Err(AgentError::MissingPlaceholder(name.as_str().to_string())),
            },
            None => out.push_str(&m.as_str()[..1]),
        }
        last = m.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

impl PromptTemplate {
    pub fn parse(mode: PromptMode, text: &str) -> Result<Self, AgentError> {
        let bad = |why: &str| AgentError::BadTemplate {
            mode,
            reason: why.to_string(),
        };
        let sys_at = text.find("[system]\n").ok_or_else(|| bad("missing [system] section"))?;
        let user_at = text.find("\n[user]\n").ok_or_else(|| bad("missing [user] section"))?;
        if user_at < sys_at {
            return Err(bad("[system] must precede [user]"));
        }
        let system_text = text[sys_at + "[system]\n".len()..user_at].trim_end().to_string();
        let user_text = text[user_at + "\n[user]\n".len()..].trim_end().to_string();
        let t = Self {
            mode,
            system_text,
            user_text,
        };
        for name in t.placeholders() {
            if !PLACEHOLDERS.contains(&name.as_str()) {
                return Err(bad(&format!("unknown placeholder {{{name}}}")));
            }
        }
        Ok(t)
    }

    /// Placeholder names referenced by the system and user texts.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names: Vec<String> = [&self.system_text, &self.user_text]
            .iter()
            .flat_map(|t| placeholder_re().captures_iter(t))
            .filter_map(|c| c.get(1).map(|m| m.as_str().to_string()))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Substitutes every placeholder; a missing one is an error naming it.
    pub fn render(&self, context: &BTreeMap<&str, String>) -> Result<RenderedPrompt, AgentError> {
        Ok(RenderedPrompt {
            system: substitute(&self.system_text, context)?,
            user: substitute(&self.user_text, context)?,
        })
    }
}

macro_rules! builtin {
    ($stem:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/", $stem, ".txt"))
    };
}

macro_rules! builtin_exemplars {
    ($stem:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/exemplars/", $stem, ".txt"))
    };
}

fn builtin_text(mode: PromptMode) -> &'static str {
    match mode {
        PromptMode::ZeroShot => builtin!("zero_shot"),
        PromptMode::ZeroShotCot => builtin!("zero_shot_cot"),
        PromptMode::FewShot => builtin!("few_shot"),
        PromptMode::FewShotCot => builtin!("few_shot_cot"),
        PromptMode::RepairZeroShot => builtin!("repair_zero_shot"),
        PromptMode::RepairFewShot => builtin!("repair_few_shot"),
        PromptMode::RepairCot => builtin!("repair_cot"),
        PromptMode::SelfRefinePlan => builtin!("self_refine_plan"),
        PromptMode::SelfRefineApply => builtin!("self_refine_apply"),
        PromptMode::ErrorMsgsRepair => builtin!("error_msgs_repair"),
        PromptMode::TeacherCor => builtin!("teacher_cor"),
        PromptMode::LearnerApplyCor => builtin!("learner_apply_cor"),
    }
}

fn builtin_exemplars(mode: PromptMode) -> Option<&'static str> {
    match mode {
        PromptMode::FewShot => Some(builtin_exemplars!("few_shot")),
        PromptMode::FewShotCot => Some(builtin_exemplars!("few_shot_cot")),
        PromptMode::RepairFewShot => Some(builtin_exemplars!("repair_few_shot")),
        PromptMode::RepairCot => Some(builtin_exemplars!("repair_cot")),
        _ => None,
    }
}

/// All templates plus their few-shot exemplars.
#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    templates: HashMap<PromptMode, PromptTemplate>,
    exemplars: HashMap<PromptMode, String>,
}

impl TemplateCatalog {
    pub fn builtin() -> Self {
        let mut templates = HashMap::new();
        let mut exemplars = HashMap::new();
        for mode in PromptMode::ALL {
            let t = PromptTemplate::parse(mode, builtin_text(mode)).expect("built-in templates parse");
            templates.insert(mode, t);
            if let Some(ex) = builtin_exemplars(mode) {
                exemplars.insert(mode, ex.trim_end().to_string());
            }
        }
        Self { templates, exemplars }
    }

    /// Built-in templates overridden by whatever `<mode>.txt` and
    /// `exemplars/<mode>.txt` files exist under `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, AgentError> {
        if !dir.is_dir() {
            return Err(AgentError::Io(format!("template directory {} does not exist", dir.display())));
        }
        let mut cat = Self::builtin();
        for mode in PromptMode::ALL {
            let path = dir.join(format!("{}.txt", mode.file_stem()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
                cat.templates.insert(mode, PromptTemplate::parse(mode, &text)?);
            }
            let ex = dir.join("exemplars").join(format!("{}.txt", mode.file_stem()));
            if ex.exists() {
                let text = std::fs::read_to_string(&ex)
                    .map_err(|e| AgentError::Io(format!("{}: {e}", ex.display())))?;
                cat.exemplars.insert(mode, text.trim_end().to_string());
            }
        }
        Ok(cat)
    }

    pub fn get(&self, mode: PromptMode) -> &PromptTemplate {
        &self.templates[&mode]
    }

    pub fn exemplars(&self, mode: PromptMode) -> Option<&str> {
        self.exemplars.get(&mode).map(String::as_str)
    }

    /// Renders `mode`, filling `{examples}` from the catalog unless the
    /// context supplies it.
    pub fn render(&self, mode: PromptMode, context: &BTreeMap<&str, String>) -> Result<RenderedPrompt, AgentError> {
        let template = self.get(mode);
        if context.contains_key("examples") || !template.placeholders().iter().any(|p| p == "examples") {
            return template.render(context);
        }
        let mut ctx = context.clone();
        if let Some(ex) = self.exemplars(mode) {
            ctx.insert("examples", ex.to_string());
        }
        template.render(&ctx)
    }
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Free-function form of [`PromptTemplate::render`].
pub fn render_prompt(template: &PromptTemplate, context: &BTreeMap<&str, String>) -> Result<RenderedPrompt, AgentError> {
    template.render(context)
}
