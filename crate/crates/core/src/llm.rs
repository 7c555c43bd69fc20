//! Chat and embedding requests as plain data, plus the traits the algorithms
//! use to reach a model. Transport, retries and transcripts live in the std
//! crate's gateway.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("embedding dimension changed from {expected} to {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prompt of ~{tokens} tokens exceeds the {limit}-token limit")]
    TooLong { tokens: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// Sampling seed forwarded to the endpoint. Repeated variants of the same
    /// prompt differ only here, which keeps their request hashes distinct.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Single user-message request.
    pub fn user(model: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        ChatRequest {
            model: model.into(),
            messages: alloc::vec![Message {
                role: Role::User,
                content: prompt.into(),
            }],
            temperature,
            stop: None,
            max_tokens: None,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_stop(mut self, stop: Vec<String>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == Some(0) {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Concatenated message contents, for prompt-length checks and mocks.
    pub fn prompt_text(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }

    /// Stable SHA-256 digest (hex) of model, messages, temperature, stop,
    /// max_tokens and seed. Independent of serializer details, so transcripts
    /// move between machines.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        feed(&mut h, b"chat-v1");
        feed(&mut h, self.model.as_bytes());
        for m in &self.messages {
            feed(&mut h, m.role.as_str().as_bytes());
            feed(&mut h, m.content.as_bytes());
        }
        feed(&mut h, &self.temperature.to_bits().to_le_bytes());
        match &self.stop {
            None => feed(&mut h, b"-"),
            Some(stops) => {
                feed(&mut h, &(stops.len() as u64).to_le_bytes());
                for s in stops {
                    feed(&mut h, s.as_bytes());
                }
            }
        }
        match self.max_tokens {
            None => feed(&mut h, b"-"),
            Some(t) => feed(&mut h, &t.to_le_bytes()),
        }
        match self.seed {
            None => feed(&mut h, b"-"),
            Some(s) => feed(&mut h, &s.to_le_bytes()),
        }
        hex(&h.finalize())
    }
}

/// Digest of a single embedding input under a model name.
pub fn embedding_hash(model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    feed(&mut h, b"embed-v1");
    feed(&mut h, model.as_bytes());
    feed(&mut h, text.as_bytes());
    hex(&h.finalize())
}

fn feed(h: &mut Sha256, bytes: &[u8]) {
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Something that answers chat requests.
///
/// `chat_batch` exists so implementations can run requests concurrently;
/// results must come back in request order.
pub trait ChatModel {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError>;

    fn chat_batch(&self, reqs: &[ChatRequest]) -> Vec<Result<String, LlmError>> {
        reqs.iter().map(|r| self.chat(r)).collect()
    }

    /// Model name put into requests built by this crate.
    fn model_name(&self) -> &str;
}

/// Something that maps texts to dense vectors, one per input, in input order.
pub trait Embedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        (**self).chat(req)
    }
    fn chat_batch(&self, reqs: &[ChatRequest]) -> Vec<Result<String, LlmError>> {
        (**self).chat_batch(reqs)
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        (**self).embed(texts)
    }
}

/// Canned-response chat model for tests and dry runs: returns the result of a
/// closure over the request.
pub struct FnChat<F> {
    pub name: String,
    pub respond: F,
}

impl<F> FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError>,
{
    pub fn new(name: &str, respond: F) -> Self {
        FnChat {
            name: name.to_string(),
            respond,
        }
    }
}

impl<F> ChatModel for FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError>,
{
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        req.validate()?;
        (self.respond)(req)
    }
    fn model_name(&self) -> &str {
        &self.name
    }
}
