//! Chat models, prompt templates and the two agent roles.
//!
//! The code learner writes and repairs programs; the code teacher reads a
//! failing program together with its execution report and writes a
//! chain-of-repair (CoR): why the bug happens and how to fix it.

mod extract;
mod model;
mod templates;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::extract_code;
pub use model::{
    parse_completion, Backend, ChatModel, ChatModelConfig, ModelResponse, DEFAULT_ENDPOINT, DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
};
pub use templates::{render_prompt, PromptMode, PromptTemplate, RenderedPrompt, TemplateCatalog, PLACEHOLDERS};

use crate::corpus::Task;
use crate::sandbox::ExecutionReport;

/// System instruction of the learner when repairing.
pub const LEARNER_ROLE: &str = "You are a student assistant with excellent code repair capabilities.";
/// System instruction of the teacher.
pub const TEACHER_ROLE: &str = "You are an experienced and insightful programming instructor.";

/// Cap on compiler feedback quoted in a prompt.
pub const MAX_FEEDBACK_CHARS: usize = 2000;

const WITHHELD_DESCRIPTION: &str = "(not provided)";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("missing placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("template {mode}: {reason}")]
    BadTemplate { mode: PromptMode, reason: String },
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("environment variable {0} holding the API key is not set")]
    MissingCredentials(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed chat response: {0}")]
    MalformedResponse(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// A teacher's repair instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoRText {
    /// Why the bug occurs.
    pub reason: String,
    /// How to fix it.
    pub plan: String,
    /// The full teacher response.
    pub raw: String,
}

fn plan_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?im)(?:^[ \t]*#{1,6}[ \t]*\**(?:repair plan|how to fix|fix|plan|solution)\**[ \t]*:?[ \t]*$|(?:^|[\s.;])\**(?:repair plan|how to fix|fix|plan|solution)\**[ \t]*:)",
        )
        .unwrap()
    })
}

fn reason_prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:#{1,6}\s*)?\**(?:bug )?reason\**\s*:?\s*").unwrap())
}

impl CoRText {
    /// Splits at the first plan marker (`Fix:`, `Plan:`, `## Solution`, ...).
    /// Without a marker both fields hold the whole response.
    pub fn parse(raw: &str) -> Self {
        let raw_owned = raw.to_string();
        match plan_marker_re().find(raw) {
            Some(m) => {
                let reason = raw[..m.start()].trim();
                let reason = reason_prefix_re().replace(reason, "").trim().to_string();
                let plan = raw[m.end()..].trim().to_string();
                if reason.is_empty() || plan.is_empty() {
                    return Self::whole(raw_owned);
                }
                Self {
                    reason,
                    plan,
                    raw: raw_owned,
                }
            }
            None => Self::whole(raw_owned),
        }
    }

    fn whole(raw: String) -> Self {
        let t = raw.trim().to_string();
        Self {
            reason: t.clone(),
            plan: t,
            raw,
        }
    }
}

/// The structured error text fed back to a model: the diagnostic line, the
/// offending source line and the failing case, capped at `max_chars`.
pub fn feedback_text(report: &ExecutionReport, max_chars: usize) -> String {
    let text = match &report.error {
        Some(e) => e.description.clone(),
        None => format!("{:?}", report.verdict),
    };
    if text.chars().count() <= max_chars {
        return text;
    }
    let mut lines = text.lines();
    let mut kept: Vec<String> = lines.next().map(|l| vec![l.to_string()]).unwrap_or_default();
    kept.extend(
        lines
            .filter(|l| l.starts_with("line ") || l.starts_with("failed test"))
            .map(str::to_string),
    );
    let joined = kept.join("\n");
    if joined.chars().count() <= max_chars {
        return joined;
    }
    let mut cut: String = joined.chars().take(max_chars.saturating_sub(3)).collect();
    cut.push_str("...");
    cut
}

/// Builds the teacher's CoR for one failing execution.
pub struct Teacher<'a> {
    model: &'a ChatModel,
    catalog: &'a TemplateCatalog,
    pub sees_description: bool,
    history: Option<Vec<Message>>,
}

impl<'a> Teacher<'a> {
    /// `keep_history` replays earlier teacher exchanges of the episode in each
    /// request; otherwise every turn is stateless.
    pub fn new(model: &'a ChatModel, catalog: &'a TemplateCatalog, sees_description: bool, keep_history: bool) -> Self {
        Self {
            model,
            catalog,
            sees_description,
            history: keep_history.then(Vec::new),
        }
    }

    pub fn cor(&mut self, task: &Task, code: &str, report: &ExecutionReport) -> Result<CoRText, AgentError> {
        debug_assert!(!report.passed(), "teacher asked about a passing program");
        let description = if self.sees_description {
            task.description.clone()
        } else {
            WITHHELD_DESCRIPTION.to_string()
        };
        let ctx: BTreeMap<&str, String> = [
            ("description", description),
            ("code", code.to_string()),
            ("error_message", feedback_text(report, MAX_FEEDBACK_CHARS)),
        ]
        .into_iter()
        .collect();
        let prompt = self.catalog.render(PromptMode::TeacherCor, &ctx)?;
        let mut messages = vec![Message::system(&prompt.system)];
        if let Some(h) = &self.history {
            messages.extend(h.iter().cloned());
        }
        messages.push(Message::user(&prompt.user));
        let resp = self.model.generate(&messages)?;
        if let Some(h) = &mut self.history {
            h.push(Message::user(prompt.user));
            h.push(Message::assistant(&resp.text));
        }
        Ok(CoRText::parse(&resp.text))
    }
}

/// Stateless teacher call.
pub fn teacher_cor(
    model: &ChatModel,
    catalog: &TemplateCatalog,
    task: &Task,
    code: &str,
    report: &ExecutionReport,
) -> Result<CoRText, AgentError> {
    Teacher::new(model, catalog, true, false).cor(task, code, report)
}

/// A learner reply: the raw text and the code pulled out of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerReply {
    pub raw: String,
    pub code: String,
}

/// Renders `mode`, asks the model, and extracts code in `language`.
pub fn learner_call(
    model: &ChatModel,
    catalog: &TemplateCatalog,
    mode: PromptMode,
    ctx: &BTreeMap<&str, String>,
    language: &str,
) -> Result<LearnerReply, AgentError> {
    let prompt = catalog.render(mode, ctx)?;
    let resp = model.generate(&prompt.messages())?;
    Ok(LearnerReply {
        code: extract_code(&resp.text, language),
        raw: resp.text,
    })
}

/// Like [`learner_call`] but returns the raw text (self-critique plans).
pub fn plain_call(
    model: &ChatModel,
    catalog: &TemplateCatalog,
    mode: PromptMode,
    ctx: &BTreeMap<&str, String>,
) -> Result<String, AgentError> {
    let prompt = catalog.render(mode, ctx)?;
    Ok(model.generate(&prompt.messages())?.text)
}
