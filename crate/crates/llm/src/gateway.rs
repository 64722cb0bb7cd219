//! Chat-completion clients: a scripted offline mock and an HTTP client for
//! chat-completions style endpoints.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Temperature for extraction and distillation calls.
pub const EXTRACTION_TEMPERATURE: f64 = 0.1;
/// Temperature for agent conversations.
pub const DUET_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: EXTRACTION_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Optional system prompt followed by one user turn.
    pub fn prompt(system: Option<&str>, user: impl Into<String>) -> Self {
        let mut messages = Vec::with_capacity(2);
        if let Some(s) = system {
            messages.push(ChatMessage::system(s));
        }
        messages.push(ChatMessage::user(user));
        Self::new(messages)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), ChatError> {
        if self.messages.is_empty() {
            return Err(ChatError::Precondition("request has no messages".into()));
        }
        if !self.messages.iter().any(|m| m.role == ChatRole::User) {
            return Err(ChatError::Precondition("request has no user message".into()));
        }
        if let Some(pos) = self.messages.iter().position(|m| m.content.is_empty()) {
            return Err(ChatError::Precondition(format!("message {pos} is empty")));
        }
        if self.messages.iter().skip(1).any(|m| m.role == ChatRole::System) {
            return Err(ChatError::Precondition("system message must come first".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ChatError::Precondition("temperature must be non-negative".into()));
        }
        if self.max_tokens == 0 {
            return Err(ChatError::Precondition("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChatError {
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("scripted responses exhausted at call {call}")]
    ScriptExhausted { call: usize },
    #[error("scripted failure at call {call}: {message}")]
    Scripted { call: usize, message: String },
    #[error("configuration: {0}")]
    Config(String),
}

/// Anything that answers chat requests.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;
}

/// One scripted reply: text, or a failure to simulate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Reply(String),
    Fail { error: String },
}

#[derive(Debug, Default)]
struct ScriptState {
    queue: VecDeque<ScriptStep>,
    calls: usize,
    requests: Vec<ChatRequest>,
}

/// Offline client that replays a fixed list of replies in order and records
/// every request it receives.
#[derive(Debug, Default)]
pub struct ScriptedChatClient {
    state: Mutex<ScriptState>,
}

impl ScriptedChatClient {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::from_steps(replies.into_iter().map(|r| ScriptStep::Reply(r.into())))
    }

    pub fn from_steps(steps: impl IntoIterator<Item = ScriptStep>) -> Self {
        Self {
            state: Mutex::new(ScriptState {
                queue: steps.into_iter().collect(),
                ..Default::default()
            }),
        }
    }

    /// Parses a JSON array whose items are strings or `{"error": "..."}`.
    pub fn from_json(text: &str) -> Result<Self, ChatError> {
        let steps: Vec<ScriptStep> =
            serde_json::from_str(text).map_err(|e| ChatError::Config(format!("script file: {e}")))?;
        Ok(Self::from_steps(steps))
    }

    pub fn push(&self, step: ScriptStep) {
        self.state.lock().expect("script lock").queue.push_back(step);
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("script lock").calls
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().expect("script lock").queue.len()
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.state.lock().expect("script lock").requests.clone()
    }
}

impl ChatClient for ScriptedChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        request.validate()?;
        let mut state = self.state.lock().expect("script lock");
        let call = state.calls;
        state.calls += 1;
        state.requests.push(request.clone());
        match state.queue.pop_front() {
            Some(ScriptStep::Reply(text)) => Ok(text),
            Some(ScriptStep::Fail { error }) => Err(ChatError::Scripted { call, message: error }),
            None => Err(ChatError::ScriptExhausted { call }),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct RequestBudget {
    free: Mutex<usize>,
    available: Condvar,
}

impl RequestBudget {
    pub fn new(slots: usize) -> Self {
        Self {
            free: Mutex::new(slots.max(1)),
            available: Condvar::new(),
        }
    }

    pub fn run<R>(&self, f: impl FnOnce() -> R) -> R {
        {
            let mut free = self.free.lock().expect("budget lock");
            while *free == 0 {
                free = self.available.wait(free).expect("budget lock");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("budget lock") += 1;
        self.available.notify_one();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_concurrent: usize,
    /// JSON-lines file receiving every request and response.
    pub audit_log: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            timeout_secs: 120,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_ms: 500,
            max_concurrent: 4,
            audit_log: None,
        }
    }
}

impl ProviderConfig {
    pub(crate) fn api_key(&self) -> Result<Option<String>, ChatError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ChatError::Config(format!("environment variable {var} is not set"))),
        }
    }

    pub(crate) fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// Retry loop shared by the HTTP clients: transport errors, 429 and 5xx are
/// retried with exponential backoff; other statuses fail immediately.
pub(crate) fn post_with_retries(
    http: &reqwest::blocking::Client,
    config: &ProviderConfig,
    url: &str,
    body: &serde_json::Value,
) -> Result<serde_json::Value, ChatError> {
    let key = config.api_key()?;
    let attempts = config.max_retries + 1;
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(config.backoff_ms << (attempt - 1)));
        }
        let mut req = http.post(url).json(body);
        if let Some(k) = &key {
            req = req.bearer_auth(k);
        }
        match req.send() {
            Err(e) => {
                log::warn!("request to {url} failed (attempt {}): {e}", attempt + 1);
                last = e.to_string();
            }
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().map_err(|e| ChatError::Malformed(e.to_string()))?;
                if status.is_success() {
                    return serde_json::from_str(&text).map_err(|e| ChatError::Malformed(e.to_string()));
                }
                if status.as_u16() == 429 || status.is_server_error() {
                    log::warn!("{url} returned {status} (attempt {})", attempt + 1);
                    last = format!("status {status}: {text}");
                    continue;
                }
                return Err(ChatError::Provider { status: status.as_u16(), body: text });
            }
        }
    }
    Err(ChatError::Transport { attempts, message: last })
}

/// Client for OpenAI-compatible `/chat/completions` endpoints.
pub struct HttpChatClient {
    config: ProviderConfig,
    http: reqwest::blocking::Client,
    budget: RequestBudget,
    audit: Mutex<()>,
}

impl HttpChatClient {
    pub fn new(config: ProviderConfig) -> Result<Self, ChatError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ChatError::Config(e.to_string()))?;
        Ok(Self {
            budget: RequestBudget::new(config.max_concurrent),
            config,
            http,
            audit: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn audit(&self, request: &ChatRequest, outcome: &Result<String, ChatError>) {
        let Some(path) = &self.config.audit_log else { return };
        let record = serde_json::json!({
            "model": self.config.model,
            "request": request,
            "response": outcome.as_ref().ok(),
            "error": outcome.as_ref().err().map(|e| e.to_string()),
        });
        let _guard = self.audit.lock().expect("audit lock");
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{record}"));
        if let Err(e) = written {
            log::warn!("could not write audit log {}: {e}", path.display());
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        request.validate()?;
        let body = serde_json::to_value(WireRequest {
            model: &self.config.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        })
        .map_err(|e| ChatError::Malformed(e.to_string()))?;
        let url = self.config.endpoint("chat/completions");
        let outcome = self.budget.run(|| {
            let value = post_with_retries(&self.http, &self.config, &url, &body)?;
            let parsed: WireResponse =
                serde_json::from_value(value).map_err(|e| ChatError::Malformed(e.to_string()))?;
            parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| ChatError::Malformed("response has no message content".into()))
        });
        self.audit(request, &outcome);
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replies_in_order() {
        let mock = ScriptedChatClient::new(["hello", "world"]);
        let req = ChatRequest::prompt(None, "hi");
        assert_eq!(mock.complete(&req).unwrap(), "hello");
        assert_eq!(mock.complete(&req).unwrap(), "world");
        assert_eq!(mock.complete(&req), Err(ChatError::ScriptExhausted { call: 2 }));
        assert_eq!(mock.calls(), 3);
        assert_eq!(mock.requests()[0], req);
    }

    #[test]
    fn empty_request_is_rejected() {
        let mock = ScriptedChatClient::new(["unused"]);
        let req = ChatRequest::new(Vec::new());
        assert!(matches!(mock.complete(&req), Err(ChatError::Precondition(_))));
        assert_eq!(mock.remaining(), 1);
        let only_system = ChatRequest::new(vec![ChatMessage::system("s")]);
        assert!(only_system.validate().is_err());
        let late_system = ChatRequest::new(vec![ChatMessage::user("u"), ChatMessage::system("s")]);
        assert!(late_system.validate().is_err());
    }

    #[test]
    fn scripted_failures_and_json() {
        let mock = ScriptedChatClient::from_json(r#"["one", {"error": "boom"}, "three"]"#).unwrap();
        let req = ChatRequest::prompt(Some("sys"), "q");
        assert_eq!(mock.complete(&req).unwrap(), "one");
        assert_eq!(
            mock.complete(&req),
            Err(ChatError::Scripted { call: 1, message: "boom".into() })
        );
        assert_eq!(mock.complete(&req).unwrap(), "three");
        assert!(ScriptedChatClient::from_json("{").is_err());
    }

    #[test]
    fn roles_serialize_lowercase() {
        let json = serde_json::to_string(&ChatMessage::assistant("x")).unwrap();
        assert_eq!(json, r#"{"role":"assistant","content":"x"}"#);
    }

    #[test]
    fn unreachable_endpoint_exhausts_retries() {
        let config = ProviderConfig {
            base_url: "http://127.0.0.1:9".into(),
            max_retries: 1,
            backoff_ms: 1,
            timeout_secs: 2,
            ..Default::default()
        };
        let client = HttpChatClient::new(config).unwrap();
        match client.complete(&ChatRequest::prompt(None, "hi")) {
            Err(ChatError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_key_variable_is_a_config_error() {
        let config = ProviderConfig {
            api_key_env: Some("KGRAPH_TEST_SURELY_UNSET_KEY".into()),
            ..Default::default()
        };
        assert!(matches!(config.api_key(), Err(ChatError::Config(_))));
    }
}
