//! Chat model backends.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AgentError, Message};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[serde(alias = "http_chat_api")]
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChatModelConfig {
    pub backend: Backend,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Responses returned in order by the scripted backend.
    pub script: Vec<String>,
    /// Per-task scripts; take precedence over `script` for that task.
    pub task_scripts: BTreeMap<String, Vec<String>>,
    pub max_attempts: u32,
    pub retry_base_ms: u64,
    pub request_timeout_secs: u64,
}

impl Default for ChatModelConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Http,
            model_name: "gpt-3.5-turbo-0613".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            script: Vec::new(),
            task_scripts: BTreeMap::new(),
            max_attempts: 3,
            retry_base_ms: 500,
            request_timeout_secs: 120,
        }
    }
}

impl ChatModelConfig {
    pub fn scripted<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            backend: Backend::Scripted,
            model_name: "scripted".into(),
            api_key_env: None,
            script: responses.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(AgentError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(AgentError::Config("max_tokens must be > 0".into()));
        }
        if self.max_attempts == 0 {
            return Err(AgentError::Config("max_attempts must be > 0".into()));
        }
        if self.backend == Backend::Http && self.endpoint.trim().is_empty() {
            return Err(AgentError::Config("endpoint is required for the http backend".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

enum Transport {
    Scripted(Mutex<VecDeque<String>>),
    Http { agent: ureq::Agent, api_key: Option<String> },
}

/// One model session. Counts calls and tokens; the scripted backend keeps its
/// own cursor, so a session must not be shared between episodes.
pub struct ChatModel {
    config: ChatModelConfig,
    transport: Transport,
    calls: AtomicUsize,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl std::fmt::Debug for ChatModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatModel")
            .field("backend", &self.config.backend)
            .field("model_name", &self.config.model_name)
            .field("calls", &self.calls())
            .finish()
    }
}

impl ChatModel {
    pub fn new(config: ChatModelConfig) -> Result<Self, AgentError> {
        Self::for_task(config, None)
    }

    /// Opens a session; scripted backends pick `task_scripts[task_id]` when present.
    pub fn for_task(config: ChatModelConfig, task_id: Option<&str>) -> Result<Self, AgentError> {
        config.validate()?;
        let transport = match config.backend {
            Backend::Scripted => {
                let script = task_id
                    .and_then(|id| config.task_scripts.get(id))
                    .unwrap_or(&config.script);
                Transport::Scripted(Mutex::new(script.iter().cloned().collect()))
            }
            Backend::Http => {
                let api_key = match &config.api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| AgentError::MissingCredentials(var.clone()))?),
                    None => None,
                };
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_secs(config.request_timeout_secs)))
                    .http_status_as_error(false)
                    .build()
                    .into();
                Transport::Http { agent, api_key }
            }
        };
        Ok(Self {
            config,
            transport,
            calls: AtomicUsize::new(0),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ChatModelConfig {
        &self.config
    }

    /// Invocations so far, failed ones included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn tokens(&self) -> (u64, u64) {
        (
            self.prompt_tokens.load(Ordering::SeqCst),
            self.completion_tokens.load(Ordering::SeqCst),
        )
    }

    pub fn generate(&self, messages: &[Message]) -> Result<ModelResponse, AgentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let resp = match &self.transport {
            Transport::Scripted(queue) => {
                let text = queue.lock().unwrap().pop_front().ok_or(AgentError::ScriptExhausted)?;
                ModelResponse {
                    text,
                    prompt_tokens: None,
                    completion_tokens: None,
                }
            }
            Transport::Http { agent, api_key } => self.post_with_retry(agent, api_key.as_deref(), messages)?,
        };
        self.prompt_tokens.fetch_add(resp.prompt_tokens.unwrap_or(0), Ordering::SeqCst);
        self.completion_tokens.fetch_add(resp.completion_tokens.unwrap_or(0), Ordering::SeqCst);
        Ok(resp)
    }

    fn post_with_retry(&self, agent: &ureq::Agent, api_key: Option<&str>, messages: &[Message]) -> Result<ModelResponse, AgentError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let attempts = self.config.max_attempts;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.retry_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match post_once(agent, &self.config.endpoint, api_key, &body) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("chat request attempt {}/{attempts} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(AgentError::Transport { attempts, message: last })
    }
}

enum Attempt {
    Retry(String),
    Fatal(AgentError),
}

fn post_once(agent: &ureq::Agent, endpoint: &str, api_key: Option<&str>, body: &Value) -> Result<ModelResponse, Attempt> {
    let mut req = agent.post(endpoint).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
    if status == 429 || status >= 500 {
        return Err(Attempt::Retry(format!("HTTP {status}: {}", snippet(&text))));
    }
    if status >= 400 {
        return Err(Attempt::Fatal(AgentError::Http {
            status,
            body: snippet(&text),
        }));
    }
    parse_completion(&text).map_err(Attempt::Fatal)
}

/// Reads the first choice's message content and the usage block.
pub fn parse_completion(body: &str) -> Result<ModelResponse, AgentError> {
    let v: Value = serde_json::from_str(body).map_err(|e| AgentError::MalformedResponse(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| AgentError::MalformedResponse("missing choices[0].message.content".into()))?;
    Ok(ModelResponse {
        text: text.to_string(),
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    })
}

fn snippet(s: &str) -> String {
    s.chars().take(300).collect()
}
