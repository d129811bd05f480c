//! Model backends: a chat-completion HTTP client and a scripted replay backend.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AgentError, BackendReply, ChatTurn, RoleConfig, RoleId};

/// Something that can answer a chat history on behalf of a role.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, role: &RoleConfig, history: &[ChatTurn]) -> Result<BackendReply, AgentError>;

    /// Whether identical inputs always produce identical replies.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// One scripted reply, optionally repeated for consecutive invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Text(String),
    Repeated { text: String, repeat: usize },
}

/// Replies for one case, keyed by role and consumed in invocation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseScript(pub BTreeMap<RoleId, Vec<ScriptEntry>>);

impl CaseScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, role: RoleId, text: impl Into<String>) -> &mut Self {
        self.0.entry(role).or_default().push(ScriptEntry::Text(text.into()));
        self
    }

    pub fn push_repeated(&mut self, role: RoleId, text: impl Into<String>, repeat: usize) -> &mut Self {
        self.0.entry(role).or_default().push(ScriptEntry::Repeated { text: text.into(), repeat });
        self
    }

    fn expand(&self) -> BTreeMap<RoleId, Vec<String>> {
        self.0
            .iter()
            .map(|(role, entries)| {
                let mut out = Vec::new();
                for e in entries {
                    match e {
                        ScriptEntry::Text(t) => out.push(t.clone()),
                        ScriptEntry::Repeated { text, repeat } => {
                            out.extend(std::iter::repeat_n(text.clone(), *repeat))
                        }
                    }
                }
                (*role, out)
            })
            .collect()
    }
}

/// Fixture file: one [`CaseScript`] per claim id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedFixture(pub BTreeMap<String, CaseScript>);

impl ScriptedFixture {
    pub fn load(path: &std::path::Path) -> Result<Self, AgentError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AgentError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AgentError::Fixture(format!("{}: {e}", path.display())))
    }
}

/// Replays canned replies by `(role_id, invocation ordinal)`.
///
/// Keys ignore prompt text entirely, so prompt wording can change without
/// touching fixtures. An invocation past the end of a role's list fails.
#[derive(Debug)]
pub struct ScriptedBackend {
    replies: BTreeMap<RoleId, Vec<String>>,
    cursor: Mutex<BTreeMap<RoleId, usize>>,
    count_tokens: bool,
}

impl ScriptedBackend {
    pub fn new(script: &CaseScript) -> Self {
        Self { replies: script.expand(), cursor: Mutex::new(BTreeMap::new()), count_tokens: true }
    }

    /// Disables the word-count token estimate; replies then report zero tokens.
    pub fn without_token_counting(mut self) -> Self {
        self.count_tokens = false;
        self
    }

    /// Number of replies consumed so far for `role`.
    pub fn consumed(&self, role: RoleId) -> usize {
        self.cursor.lock().expect("cursor lock").get(&role).copied().unwrap_or(0)
    }
}

fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, role: &RoleConfig, history: &[ChatTurn]) -> Result<BackendReply, AgentError> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let used = cursor.entry(role.role_id).or_insert(0);
        let ordinal = *used + 1;
        let text = self
            .replies
            .get(&role.role_id)
            .and_then(|r| r.get(*used))
            .ok_or(AgentError::ScriptExhausted { role: role.role_id, ordinal })?
            .clone();
        *used += 1;
        let (prompt_tokens, completion_tokens) = if self.count_tokens {
            (history.iter().map(|t| word_count(&t.content)).sum(), word_count(&text))
        } else {
            (0, 0)
        };
        Ok(BackendReply { text, prompt_tokens, completion_tokens })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Chat-completion endpoint client (OpenAI-compatible request and reply shape).
#[derive(Debug)]
pub struct HttpBackend {
    url: String,
    api_key: String,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<WireMessage<'a>>,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>, timeout: Duration, max_retries: u32) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { url: url.into(), api_key: api_key.into(), max_retries, backoff: Duration::from_millis(500), agent }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// `Err((retryable, message))` on failure.
    fn send_once(&self, body: &WireRequest<'_>) -> Result<BackendReply, (bool, String)> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 || status == 429 {
            return Err((true, format!("HTTP {status}")));
        }
        if status >= 400 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((false, format!("HTTP {status}: {detail}")));
        }
        let value: serde_json::Value =
            resp.body_mut().read_json().map_err(|e| (false, format!("invalid JSON body: {e}")))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| (false, "reply has no choices[0].message.content".to_string()))?
            .to_string();
        let usage = |key: &str| value.pointer(&format!("/usage/{key}")).and_then(|v| v.as_u64()).unwrap_or(0);
        Ok(BackendReply { text, prompt_tokens: usage("prompt_tokens"), completion_tokens: usage("completion_tokens") })
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, role: &RoleConfig, history: &[ChatTurn]) -> Result<BackendReply, AgentError> {
        let body = WireRequest {
            model: &role.model_id,
            temperature: role.temperature,
            messages: history.iter().map(|t| WireMessage { role: t.speaker.as_str(), content: &t.content }).collect(),
        };
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok(reply) => return Ok(reply),
                Err((retryable, message)) => {
                    if !retryable || attempt > self.max_retries {
                        return Err(AgentError::Transport { attempts: attempt, message });
                    }
                    tracing::warn!(role = %role.role_id, attempt, %message, "retrying backend call");
                    std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                }
            }
        }
    }
}
