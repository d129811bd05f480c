//! Agent roles, prompt rendering, model invocation and structured-reply parsing.

mod backend;
mod json;
mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use backend::{CaseScript, HttpBackend, ModelBackend, ScriptEntry, ScriptedBackend, ScriptedFixture};
pub use json::extract_json;
pub use templates::{placeholders, render_prompt, render_text, template, template_ids};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("missing binding for placeholder '{0}'")]
    MissingBinding(String),
    #[error("malformed agent reply")]
    MalformedReply { raw: String },
    #[error("script exhausted for role {role} at invocation {ordinal}")]
    ScriptExhausted { role: RoleId, ordinal: usize },
    #[error("backend transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("role {0} is not bound")]
    UnboundRole(RoleId),
    #[error("invalid role binding for {role}: {message}")]
    InvalidBinding { role: RoleId, message: String },
    #[error("empty chat turn content")]
    EmptyContent,
    #[error("scripted fixture: {0}")]
    Fixture(String),
}

/// Every agent slot in a deliberation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleId {
    Miner,
    Plaintiff,
    Defense,
    Court,
    Expert,
    Critic,
    Consistency,
    Judge1,
    Judge2,
    Judge3,
    PragFormulator,
    /// Scores evidence admissibility during negotiation and discovery.
    Arbiter,
}

impl RoleId {
    pub const ALL: [RoleId; 12] = [
        RoleId::Miner,
        RoleId::Plaintiff,
        RoleId::Defense,
        RoleId::Court,
        RoleId::Expert,
        RoleId::Critic,
        RoleId::Consistency,
        RoleId::Judge1,
        RoleId::Judge2,
        RoleId::Judge3,
        RoleId::PragFormulator,
        RoleId::Arbiter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleId::Miner => "miner",
            RoleId::Plaintiff => "plaintiff",
            RoleId::Defense => "defense",
            RoleId::Court => "court",
            RoleId::Expert => "expert",
            RoleId::Critic => "critic",
            RoleId::Consistency => "consistency",
            RoleId::Judge1 => "judge1",
            RoleId::Judge2 => "judge2",
            RoleId::Judge3 => "judge3",
            RoleId::PragFormulator => "prag_formulator",
            RoleId::Arbiter => "arbiter",
        }
    }

    pub fn parse(name: &str) -> Option<RoleId> {
        RoleId::ALL.into_iter().find(|r| r.as_str() == name)
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleConfig {
    pub role_id: RoleId,
    pub model_id: String,
    pub temperature: f64,
    pub system_prompt_id: String,
}

impl RoleConfig {
    pub fn new(role_id: RoleId, model_id: &str, temperature: f64, system_prompt_id: &str) -> Self {
        Self { role_id, model_id: model_id.to_string(), temperature, system_prompt_id: system_prompt_id.to_string() }
    }
}

/// Model assignment for every role of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleBindings(BTreeMap<RoleId, RoleConfig>);

impl Default for RoleBindings {
    fn default() -> Self {
        use RoleId::*;
        let table = [
            (Miner, "deepseek-r1", 0.7, "miner_system"),
            (Plaintiff, "gpt-5-mini", 0.5, "plaintiff_system"),
            (Defense, "deepseek-v3.2", 0.5, "defense_system"),
            (Court, "qwen3-235b-a22b-2507", 0.2, "court_system"),
            (Expert, "hermes-3-llama-3.1-405b", 0.5, "expert_system"),
            (Critic, "deepseek-r1", 0.3, "critic_system"),
            (Consistency, "deepseek-v3.2", 0.3, "consistency_system"),
            (Judge1, "deepseek-r1", 0.3, "judge_system"),
            (Judge2, "hermes-3-llama-3.1-405b", 0.3, "judge_system"),
            (Judge3, "qwen3-235b-a22b-2507", 0.3, "judge_system"),
            (PragFormulator, "gpt-5-mini", 0.3, "prag_system"),
            (Arbiter, "qwen3-235b-a22b-2507", 0.2, "arbiter_system"),
        ];
        Self(table.into_iter().map(|(role, model, t, sys)| (role, RoleConfig::new(role, model, t, sys))).collect())
    }
}

impl RoleBindings {
    pub fn empty() -> Self {
        Self(BTreeMap::new())
    }

    pub fn get(&self, role: RoleId) -> Result<&RoleConfig, AgentError> {
        self.0.get(&role).ok_or(AgentError::UnboundRole(role))
    }

    pub fn set(&mut self, config: RoleConfig) {
        self.0.insert(config.role_id, config);
    }

    pub fn iter(&self) -> impl Iterator<Item = &RoleConfig> {
        self.0.values()
    }

    /// Checks that every role is bound with a sane temperature and a known system prompt.
    pub fn validate(&self) -> Result<(), AgentError> {
        for role in RoleId::ALL {
            let cfg = self.get(role)?;
            let invalid = |message: String| AgentError::InvalidBinding { role, message };
            if cfg.role_id != role {
                return Err(invalid(format!("bound under {role} but declares {}", cfg.role_id)));
            }
            if !(0.0..=2.0).contains(&cfg.temperature) {
                return Err(invalid(format!("temperature {} outside [0, 2]", cfg.temperature)));
            }
            if cfg.model_id.trim().is_empty() {
                return Err(invalid("empty model id".to_string()));
            }
            template(&cfg.system_prompt_id)?;
        }
        Ok(())
    }

    /// Plaintiff and defense trade models and temperatures; their role slots stay put.
    pub fn swapped_counsels(&self) -> Result<Self, AgentError> {
        let mut out = self.clone();
        let p = self.get(RoleId::Plaintiff)?.clone();
        let d = self.get(RoleId::Defense)?.clone();
        let plaintiff = out.0.get_mut(&RoleId::Plaintiff).expect("checked above");
        plaintiff.model_id = d.model_id;
        plaintiff.temperature = d.temperature;
        let defense = out.0.get_mut(&RoleId::Defense).expect("checked above");
        defense.model_id = p.model_id;
        defense.temperature = p.temperature;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::System => "system",
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: Speaker,
    pub content: String,
}

impl ChatTurn {
    pub fn new(speaker: Speaker, content: impl Into<String>) -> Result<Self, AgentError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(AgentError::EmptyContent);
        }
        Ok(Self { speaker, content })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One logged backend invocation; raw replies are kept even when parsing later fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCall {
    pub role: RoleId,
    pub model_id: String,
    pub purpose: String,
    pub prompt: String,
    pub reply: Option<String>,
    pub error: Option<String>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Role-aware front end over a [`ModelBackend`] that logs every call.
#[derive(Clone)]
pub struct AgentRuntime {
    backend: Arc<dyn ModelBackend>,
    roles: RoleBindings,
    calls: Arc<Mutex<Vec<AgentCall>>>,
}

impl fmt::Debug for AgentRuntime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentRuntime")
            .field("roles", &self.roles)
            .field("calls", &self.calls.lock().map(|c| c.len()).unwrap_or(0))
            .finish_non_exhaustive()
    }
}

/// Free-function form of a single backend call.
pub fn invoke(role: &RoleConfig, history: &[ChatTurn], backend: &dyn ModelBackend) -> Result<BackendReply, AgentError> {
    if history.iter().any(|t| t.content.trim().is_empty()) {
        return Err(AgentError::EmptyContent);
    }
    backend.complete(role, history)
}

impl AgentRuntime {
    pub fn new(backend: Arc<dyn ModelBackend>, roles: RoleBindings) -> Self {
        Self { backend, roles, calls: Arc::new(Mutex::new(Vec::new())) }
    }

    pub fn roles(&self) -> &RoleBindings {
        &self.roles
    }

    pub fn backend_is_deterministic(&self) -> bool {
        self.backend.is_deterministic()
    }

    /// Same backend and call log, with plaintiff and defense models exchanged.
    pub fn swapped_counsels(&self) -> Result<Self, AgentError> {
        Ok(Self {
            backend: Arc::clone(&self.backend),
            roles: self.roles.swapped_counsels()?,
            calls: Arc::clone(&self.calls),
        })
    }

    /// Sends `history` for `role`, logging the exchange under `purpose`.
    pub fn invoke(&self, role: RoleId, purpose: &str, history: &[ChatTurn]) -> Result<BackendReply, AgentError> {
        let cfg = self.roles.get(role)?;
        let prompt =
            history.iter().rev().find(|t| t.speaker == Speaker::User).map(|t| t.content.clone()).unwrap_or_default();
        let result = invoke(cfg, history, self.backend.as_ref());
        let entry = match &result {
            Ok(r) => AgentCall {
                role,
                model_id: cfg.model_id.clone(),
                purpose: purpose.to_string(),
                prompt,
                reply: Some(r.text.clone()),
                error: None,
                prompt_tokens: r.prompt_tokens,
                completion_tokens: r.completion_tokens,
            },
            Err(e) => AgentCall {
                role,
                model_id: cfg.model_id.clone(),
                purpose: purpose.to_string(),
                prompt,
                reply: None,
                error: Some(e.to_string()),
                prompt_tokens: 0,
                completion_tokens: 0,
            },
        };
        self.calls.lock().expect("call log lock").push(entry);
        result
    }

    fn system_turn(&self, role: RoleId) -> Result<ChatTurn, AgentError> {
        let cfg = self.roles.get(role)?;
        ChatTurn::new(Speaker::System, render_prompt(&cfg.system_prompt_id, &[])?)
    }

    /// Single-turn exchange using the role's configured system prompt.
    pub fn ask(&self, role: RoleId, purpose: &str, prompt: &str) -> Result<String, AgentError> {
        let history = [self.system_turn(role)?, ChatTurn::new(Speaker::User, prompt)?];
        Ok(self.invoke(role, purpose, &history)?.text)
    }

    /// Single-turn exchange with an explicit system prompt.
    pub fn ask_as(&self, role: RoleId, purpose: &str, system: &str, prompt: &str) -> Result<String, AgentError> {
        let history = [ChatTurn::new(Speaker::System, system)?, ChatTurn::new(Speaker::User, prompt)?];
        Ok(self.invoke(role, purpose, &history)?.text)
    }

    /// Asks for a JSON reply, re-asking once with a repair instruction if it
    /// does not parse. The second failure carries the second raw reply.
    pub fn ask_json(&self, role: RoleId, purpose: &str, prompt: &str) -> Result<Value, AgentError> {
        let system = self.system_turn(role)?;
        let user = ChatTurn::new(Speaker::User, prompt)?;
        let first = self.invoke(role, purpose, &[system.clone(), user.clone()])?.text;
        if let Ok(v) = extract_json(&first) {
            return Ok(v);
        }
        tracing::warn!(%role, purpose, "unparseable JSON reply, asking once more");
        self.repair_json(role, purpose, system, user, &first)
    }

    /// The repair turn on its own, for callers that validated the first reply themselves.
    pub fn repair_json(
        &self,
        role: RoleId,
        purpose: &str,
        system: ChatTurn,
        user: ChatTurn,
        previous: &str,
    ) -> Result<Value, AgentError> {
        let mut history = vec![system, user];
        if !previous.trim().is_empty() {
            history.push(ChatTurn::new(Speaker::Assistant, previous)?);
        }
        history.push(ChatTurn::new(Speaker::User, render_prompt("json_repair", &[])?)?);
        let second = self.invoke(role, &format!("{purpose} (repair)"), &history)?.text;
        extract_json(&second)
    }

    /// System turn for `role` plus a user turn, as used by [`Self::ask_json`].
    pub fn turns_for(&self, role: RoleId, prompt: &str) -> Result<(ChatTurn, ChatTurn), AgentError> {
        Ok((self.system_turn(role)?, ChatTurn::new(Speaker::User, prompt)?))
    }

    pub fn calls(&self) -> Vec<AgentCall> {
        self.calls.lock().expect("call log lock").clone()
    }

    pub fn take_calls(&self) -> Vec<AgentCall> {
        std::mem::take(&mut *self.calls.lock().expect("call log lock"))
    }

    pub fn tokens_total(&self) -> u64 {
        self.calls.lock().expect("call log lock").iter().map(|c| c.prompt_tokens + c.completion_tokens).sum()
    }
}
