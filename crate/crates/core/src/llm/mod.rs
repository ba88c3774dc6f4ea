//! Conversations, token accounting and chat-completion backends.

mod http;
mod replay;

use std::fmt;
use std::ops::AddAssign;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use replay::{Exchange, RecordingBackend, ReplayBackend, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("LLM backend timed out")]
    BackendTimeout,
    #[error("LLM backend returned HTTP {0}")]
    BackendHTTPError(u16),
    #[error("LLM backend rate limit exceeded")]
    RateLimited,
    #[error("conversation is empty")]
    EmptyConversation,
    #[error("no recorded completion: {0}")]
    NoRecording(String),
    #[error("LLM transport error: {0}")]
    Transport(String),
    #[error("malformed LLM response: {0}")]
    InvalidResponse(String),
    #[error("LLM backend misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentTag {
    Core,
    ErrorFix,
    CoverageFeedback,
    Testplan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    pub token_count: usize,
    pub segment_tag: SegmentTag,
    pub turn_index: usize,
}

pub trait TokenEstimator: Send + Sync + fmt::Debug {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(chars / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharsPerToken(pub usize);

impl Default for CharsPerToken {
    fn default() -> Self {
        CharsPerToken(4)
    }
}

impl TokenEstimator for CharsPerToken {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(self.0.max(1))
    }
}

/// Token count under the default estimator.
pub fn count_tokens(text: &str) -> usize {
    CharsPerToken::default().count(text)
}

pub type SharedEstimator = Arc<dyn TokenEstimator>;

pub fn default_estimator() -> SharedEstimator {
    Arc::new(CharsPerToken::default())
}

/// Ordered chat history owned by one worker.
#[derive(Debug, Clone)]
pub struct Conversation {
    id: String,
    messages: Vec<Message>,
    cumulative_tokens: usize,
    next_turn: usize,
    estimator: SharedEstimator,
}

impl PartialEq for Conversation {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.messages == other.messages
            && self.cumulative_tokens == other.cumulative_tokens
    }
}

impl Conversation {
    /// A conversation whose first message is `system_prompt`.
    pub fn new(id: impl Into<String>, system_prompt: &str, estimator: SharedEstimator) -> Self {
        let mut c = Conversation::empty(id, estimator);
        c.push(Role::System, system_prompt, SegmentTag::Core);
        c
    }

    /// No messages at all; `send` on it fails with `EmptyConversation`.
    pub fn empty(id: impl Into<String>, estimator: SharedEstimator) -> Self {
        Conversation {
            id: id.into(),
            messages: Vec::new(),
            cumulative_tokens: 0,
            next_turn: 0,
            estimator,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn cumulative_tokens(&self) -> usize {
        self.cumulative_tokens
    }

    pub fn estimator(&self) -> &SharedEstimator {
        &self.estimator
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn last(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub fn push(&mut self, role: Role, content: impl Into<String>, tag: SegmentTag) -> &Message {
        let content = content.into();
        let token_count = self.estimator.count(&content);
        self.cumulative_tokens += token_count;
        self.messages.push(Message {
            role,
            content,
            token_count,
            segment_tag: tag,
            turn_index: self.next_turn,
        });
        self.next_turn += 1;
        self.messages.last().expect("just pushed")
    }

    /// Swaps the system prompt text, keeping its turn index.
    pub fn replace_system_prompt(&mut self, content: impl Into<String>) {
        if let Some(m) = self.messages.first() {
            if m.role == Role::System {
                self.set_content(0, content.into());
            }
        }
    }

    /// Removes the messages at the given positions.
    pub fn remove_indices(&mut self, indices: &[usize]) {
        let mut i = 0;
        self.messages.retain(|m| {
            let keep = !indices.contains(&i);
            i += 1;
            if !keep {
                self.cumulative_tokens -= m.token_count;
            }
            keep
        });
    }

    pub fn set_content(&mut self, index: usize, content: String) {
        let m = &mut self.messages[index];
        let tokens = self.estimator.count(&content);
        self.cumulative_tokens = self.cumulative_tokens - m.token_count + tokens;
        m.token_count = tokens;
        m.content = content;
    }

    /// Checks the bookkeeping invariants: token sum, system-first, increasing turns.
    pub fn audit(&self) -> Result<(), String> {
        let sum: usize = self.messages.iter().map(|m| m.token_count).sum();
        if sum != self.cumulative_tokens {
            return Err(format!(
                "cumulative_tokens {} != sum {}",
                self.cumulative_tokens, sum
            ));
        }
        if let Some(m) = self
            .messages
            .iter()
            .find(|m| m.token_count != self.estimator.count(&m.content))
        {
            return Err(format!("turn {} has stale token count", m.turn_index));
        }
        if self
            .messages
            .first()
            .is_some_and(|m| m.role != Role::System)
        {
            return Err("first message is not the system prompt".into());
        }
        if self
            .messages
            .windows(2)
            .any(|w| w[0].turn_index >= w[1].turn_index)
        {
            return Err("turn indices not strictly increasing".into());
        }
        Ok(())
    }
}

/// Hex SHA-256 over the `(role, content)` sequence.
pub fn conversation_key(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0u8]);
        h.update((m.content.len() as u64).to_le_bytes());
        h.update(m.content.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub num_candidates: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.3,
            top_p: 0.7,
            num_candidates: 5,
        }
    }
}

impl SamplingConfig {
    pub fn with_candidates(self, n: usize) -> Self {
        SamplingConfig {
            num_candidates: n,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.num_candidates == 0 {
            return Err("num_candidates must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub wall_time_s: f64,
}

impl UsageStats {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl AddAssign for UsageStats {
    fn add_assign(&mut self, o: Self) {
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
        self.wall_time_s += o.wall_time_s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub candidates: Vec<String>,
    pub usage: UsageStats,
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Returns exactly `sampling.num_candidates` completions in backend
    /// order. The conversation is left untouched.
    fn send(
        &self,
        conversation: &Conversation,
        sampling: &SamplingConfig,
    ) -> Result<Completion, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn send(&self, c: &Conversation, s: &SamplingConfig) -> Result<Completion, LlmError> {
        (**self).send(c, s)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn send(&self, c: &Conversation, s: &SamplingConfig) -> Result<Completion, LlmError> {
        (**self).send(c, s)
    }
}

/// Usage estimated locally from the prompt and the returned texts.
pub(crate) fn estimated_usage(
    conv: &Conversation,
    candidates: &[String],
    wall_time_s: f64,
) -> UsageStats {
    let est = conv.estimator();
    UsageStats {
        prompt_tokens: conv.cumulative_tokens() as u64,
        completion_tokens: candidates.iter().map(|c| est.count(c) as u64).sum(),
        wall_time_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn estimator_examples() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens(&"a".repeat(4000)), 1000);
        assert_eq!(count_tokens("abcde"), 2);
    }

    #[test]
    fn sampling_defaults() {
        let s = SamplingConfig::default();
        assert_eq!((s.temperature, s.top_p, s.num_candidates), (0.3, 0.7, 5));
        assert!(s.validate().is_ok());
        assert!(SamplingConfig { top_p: 0.0, ..s }.validate().is_err());
        assert!(s.with_candidates(0).validate().is_err());
    }

    #[test]
    fn conversation_bookkeeping() {
        let mut c = Conversation::new(
            "conv_0",
            "you are a verification engineer",
            default_estimator(),
        );
        c.push(Role::User, "write a test", SegmentTag::Core);
        c.push(
            Role::Assistant,
            "{\"name\":\"t\",\"code\":\"\"}",
            SegmentTag::Core,
        );
        c.push(Role::User, "fix it", SegmentTag::ErrorFix);
        assert!(c.audit().is_ok());
        c.remove_indices(&[3]);
        c.set_content(1, "shorter".into());
        assert!(c.audit().is_ok());
        let turns: Vec<usize> = c.messages().iter().map(|m| m.turn_index).collect();
        assert_eq!(turns, vec![0, 1, 2]);
        c.push(Role::User, "again", SegmentTag::CoverageFeedback);
        assert_eq!(c.last().unwrap().turn_index, 4);
        c.replace_system_prompt("with design code");
        assert_eq!(c.messages()[0].content, "with design code");
        assert!(c.audit().is_ok());
    }

    #[test]
    fn key_depends_on_role_and_content() {
        let mut a = Conversation::new("a", "s", default_estimator());
        let mut b = Conversation::new("b", "s", default_estimator());
        a.push(Role::User, "x", SegmentTag::Core);
        b.push(Role::Assistant, "x", SegmentTag::Core);
        assert_ne!(
            conversation_key(a.messages()),
            conversation_key(b.messages())
        );
        let mut c = Conversation::new("c", "s", default_estimator());
        c.push(Role::User, "x", SegmentTag::ErrorFix);
        assert_eq!(
            conversation_key(a.messages()),
            conversation_key(c.messages())
        );
    }

    proptest! {
        #[test]
        fn estimator_subadditive(a in ".{0,200}", b in ".{0,200}") {
            let joined = format!("{a}{b}");
            prop_assert!(count_tokens(&joined) <= count_tokens(&a) + count_tokens(&b) + 1);
            prop_assert!(count_tokens(&joined) >= count_tokens(&a));
        }
    }
}
