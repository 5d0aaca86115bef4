//! Text-generation and embedding providers.
//!
//! Two providers ship with the crate: [`HttpBackend`] talks to any
//! OpenAI-compatible server, and [`MockBackend`] replays a script (or a
//! deterministic responder) for tests and offline runs. Both sit behind the
//! [`LlmBackend`] trait so the agent, the expert tools and the aggregation
//! code never care which one they hold.

mod adaptive;
mod http;
mod mock;

pub use adaptive::{
    generate_adaptive, generate_adaptive_with, AdaptiveConfig, AdaptiveOutput,
    DEFAULT_MAX_ESCALATIONS, DEFAULT_RESTART_THRESHOLD, PENALTY_STEP,
};
pub use http::{HttpBackend, HttpBackendConfig, API_KEY_ENV};
pub use mock::{hash_embedding, MockBackend, MockRequest, Responder};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default sampling temperature used whenever the decoding mode is `Sampled`.
pub const DEFAULT_SAMPLING_TEMPERATURE: f64 = 0.9;
/// Default nucleus (top-p) mass used whenever the decoding mode is `Sampled`.
pub const DEFAULT_NUCLEUS_P: f64 = 0.6;
/// Generation length cap. Not pinned by any reference setup, so kept generous.
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl LlmError {
    /// Transport failures may succeed on a later attempt; everything else is final.
    pub fn is_retriable(&self) -> bool {
        matches!(self, LlmError::Transport { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub nucleus_p: f64,
    pub repetition_penalty: f64,
    pub frequency_penalty: f64,
    pub max_tokens: u32,
    pub mode: DecodeMode,
}

impl GenerationParams {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            nucleus_p: 1.0,
            repetition_penalty: 0.0,
            frequency_penalty: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            mode: DecodeMode::Greedy,
        }
    }

    pub fn sampled() -> Self {
        Self {
            temperature: DEFAULT_SAMPLING_TEMPERATURE,
            nucleus_p: DEFAULT_NUCLEUS_P,
            mode: DecodeMode::Sampled,
            ..Self::greedy()
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Precondition("temperature must be >= 0".into()));
        }
        if !(self.nucleus_p.is_finite() && 0.0 < self.nucleus_p && self.nucleus_p <= 1.0) {
            return Err(LlmError::Precondition(
                "nucleus_p must lie in (0, 1]".into(),
            ));
        }
        if [self.repetition_penalty, self.frequency_penalty]
            .iter()
            .any(|p| p.is_nan() || *p < 0.0)
        {
            return Err(LlmError::Precondition(
                "penalties must be non-negative".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Precondition("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self::greedy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system_prompt: String,
    pub messages: Vec<Message>,
}

impl ChatExchange {
    /// A system prompt plus one user turn, the shape almost every caller needs.
    pub fn single(system_prompt: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            messages: vec![Message {
                role: Role::User,
                content: user.into(),
            }],
        }
    }

    /// Checks that turns alternate starting with the user and are non-empty.
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::Precondition("exchange has no messages".into()));
        }
        for (i, msg) in self.messages.iter().enumerate() {
            let expected = if i % 2 == 0 {
                Role::User
            } else {
                Role::Assistant
            };
            if msg.role != expected {
                return Err(LlmError::Precondition(format!(
                    "message {i} has role {} but {} was expected",
                    msg.role.as_str(),
                    expected.as_str()
                )));
            }
            if msg.content.is_empty() {
                return Err(LlmError::Precondition(format!("message {i} is empty")));
            }
        }
        Ok(())
    }

    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64, LlmError> {
        cosine(&self.values, &other.values)
    }
}

/// Cosine similarity. A zero vector has similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, LlmError> {
    if a.len() != b.len() {
        return Err(LlmError::Protocol(format!(
            "embedding dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub trait LlmBackend: Send + Sync {
    fn complete(
        &self,
        exchange: &ChatExchange,
        params: &GenerationParams,
    ) -> Result<String, LlmError>;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        self.embed(&[text.to_string()])?
            .pop()
            .ok_or_else(|| LlmError::Protocol("provider returned no embedding".into()))
    }
}

/// Ensures a provider response has one finite vector per input, all of one width.
pub(crate) fn check_embeddings(inputs: usize, vectors: &[EmbeddingVector]) -> Result<(), LlmError> {
    if vectors.len() != inputs {
        return Err(LlmError::Protocol(format!(
            "expected {inputs} embeddings, provider returned {}",
            vectors.len()
        )));
    }
    if let Some(first) = vectors.first() {
        let dim = first.dim();
        if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(LlmError::Protocol(format!(
                "embedding dimension mismatch: {dim} vs {}",
                bad.dim()
            )));
        }
    }
    if vectors
        .iter()
        .any(|v| v.values.iter().any(|x| !x.is_finite()))
    {
        return Err(LlmError::Protocol(
            "embedding contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Counts tokens for the repetition guard.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// ceil(chars / 4); good enough to spot runaway generations.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenCounter;

impl TokenCounter for ApproxTokenCounter {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}
