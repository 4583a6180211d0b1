//! HTTP-backed implementations of the binding traits.
//!
//! | binding   | request                                             | response                     |
//! |-----------|-----------------------------------------------------|------------------------------|
//! | scorer    | `{"query", "passage", "prompt"}`                    | `{"score"}`, a 0–100 grade   |
//! | embedder  | `{"text"}`                                          | `{"embedding": [number]}`    |
//! | caller    | `{"query", "candidates": [ApiSchema]}`              | `{"schema_name", "arguments"}` |
//! | generator | `{"prompt", "temperature": 0, "top_p": 0.9}`        | `{"text"}`                   |
//!
//! Every request carries `Authorization: Bearer <token>` when a token is set.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::generator::{Generator, GeneratorError};
use crate::http;
use crate::rerank::{Scorer, ScorerError};
use crate::router::{ApiCall, CallerError, ToolCaller};
use crate::schema_index::{ApiSchema, Embedder, EmbedderError, EmbeddingVector};

/// Grading instruction; the scorer request's `prompt` field is this followed
/// by the question and passage.
pub const RELEVANCE_PROMPT: &str = "Rate how relevant the passage is to the question on a scale from 0 \
(unrelated) to 100 (fully answers it). Reply with a single integer.";

pub const GENERATION_TEMPERATURE: f64 = 0.0;
pub const GENERATION_TOP_P: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub url: String,
    pub bearer_token: Option<String>,
    pub timeout: Duration,
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), bearer_token: None, timeout: Duration::from_secs(30) }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.bearer_token = token;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// POSTs and decodes a 2xx JSON reply.
    fn call<T: DeserializeOwned>(&self, body: &serde_json::Value) -> Result<T, RemoteFailure> {
        let reply = http::post_json(&self.url, body, self.bearer_token.as_deref(), self.timeout)
            .map_err(|e| RemoteFailure::Unreachable(e.to_string()))?;
        if !reply.is_success() {
            return Err(RemoteFailure::Unreachable(format!("HTTP {}: {}", reply.status, reply.body)));
        }
        serde_json::from_str(&reply.body).map_err(|e| RemoteFailure::Unparseable(format!("{e}: {}", reply.body)))
    }
}

enum RemoteFailure {
    Unreachable(String),
    Unparseable(String),
}

#[derive(Debug, Clone)]
pub struct RemoteScorer(pub Endpoint);

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

impl Scorer for RemoteScorer {
    /// The service grades 0–100; the result is that grade divided by 100.
    fn score(&self, query: &str, passage: &str) -> Result<f64, ScorerError> {
        let prompt = format!("{RELEVANCE_PROMPT}\n\nQuestion: {query}\nPassage: {passage}");
        let body = json!({"query": query, "passage": passage, "prompt": prompt});
        let reply: ScoreReply = self.0.call(&body).map_err(|e| match e {
            RemoteFailure::Unreachable(m) => ScorerError::Unreachable(m),
            RemoteFailure::Unparseable(m) => ScorerError::Unparseable(m),
        })?;
        if !reply.score.is_finite() {
            return Err(ScorerError::Unparseable(format!("non-finite score {}", reply.score)));
        }
        Ok(reply.score / 100.0)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedder(pub Endpoint);

#[derive(Deserialize)]
struct EmbedReply {
    embedding: Vec<f64>,
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedderError> {
        let reply: EmbedReply = self.0.call(&json!({"text": text})).map_err(|e| match e {
            RemoteFailure::Unreachable(m) => EmbedderError::Unreachable(m),
            RemoteFailure::Unparseable(m) => EmbedderError::Invalid(m),
        })?;
        EmbeddingVector::new(reply.embedding).ok_or_else(|| EmbedderError::Invalid("empty or non-finite embedding".into()))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteToolCaller(pub Endpoint);

impl ToolCaller for RemoteToolCaller {
    fn propose_call(&self, query: &str, candidates: &[ApiSchema]) -> Result<ApiCall, CallerError> {
        self.0.call(&json!({"query": query, "candidates": candidates})).map_err(|e| match e {
            RemoteFailure::Unreachable(m) => CallerError::Unreachable(m),
            RemoteFailure::Unparseable(m) => CallerError::Unparseable(m),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteGenerator(pub Endpoint);

#[derive(Deserialize)]
struct GenerateReply {
    text: String,
}

impl Generator for RemoteGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let body = json!({"prompt": prompt, "temperature": GENERATION_TEMPERATURE, "top_p": GENERATION_TOP_P});
        let reply: GenerateReply = self.0.call(&body).map_err(|e| match e {
            RemoteFailure::Unreachable(m) => GeneratorError::Unreachable(m),
            RemoteFailure::Unparseable(m) => GeneratorError::Unparseable(m),
        })?;
        Ok(reply.text)
    }
}
