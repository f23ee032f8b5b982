//! Model backends: text generation, zero-shot classification and embedding.
//!
//! Every role has a deterministic offline implementation (`stub`) and a generic
//! JSON-over-HTTP adapter (`http`). Pipelines only see the traits.

mod http;
mod stub;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::vecstore::Embedding;

pub use http::{HttpClassifier, HttpEmbedder, HttpGenerator};
pub use stub::{HashEmbedder, KeywordClassifier, ScriptedGenerator, StubGenerator};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_OUTPUT_CHARS: usize = 24_000;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend call timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("text {index} is empty")]
    EmptyText { index: usize },
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_instructions: String,
    pub user_content: String,
    pub max_output_chars: usize,
    pub temperature: f64,
    /// Only the stub honours the seed.
    pub seed: u64,
}

impl GenerationRequest {
    pub fn new(system_instructions: impl Into<String>, user_content: impl Into<String>) -> Self {
        Self {
            system_instructions: system_instructions.into(),
            user_content: user_content.into(),
            max_output_chars: DEFAULT_MAX_OUTPUT_CHARS,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRequest {
    pub premise: String,
    pub hypotheses: Vec<String>,
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError>;
}

pub trait Classifier: Send + Sync {
    /// One score in `[0, 1]` per hypothesis, in request order.
    fn classify(&self, req: &ClassificationRequest) -> Result<Vec<f64>, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, BackendError>;

    fn embed_one(&self, text: &str) -> Result<Embedding, BackendError> {
        let mut out = self.embed(&[text.to_string()])?;
        out.pop().ok_or_else(|| BackendError::InvalidResponse("no embedding returned".into()))
    }
}

pub(crate) fn check_embed_inputs(texts: &[String]) -> Result<(), BackendError> {
    match texts.iter().position(|t| t.trim().is_empty()) {
        Some(index) => Err(BackendError::EmptyText { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

/// How to reach one backend. Holds the *name* of the credential variable,
/// never the credential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub api_key_env: Option<String>,
    /// Request body template. String values equal to a `{{name}}` placeholder
    /// are replaced by the JSON value of that request field.
    pub request_template: Option<serde_json::Value>,
    /// JSON pointer to the interesting part of the response body.
    pub response_pointer: Option<String>,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            endpoint: None,
            model_name: "stub".into(),
            timeout_ms: 60_000,
            max_retries: 2,
            backoff_ms: 250,
            api_key_env: None,
            request_template: None,
            response_pointer: None,
        }
    }
}

impl BackendDescriptor {
    pub fn http(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model_name: model_name.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(BackendError::Config("http backend requires an endpoint".into()));
        }
        Ok(())
    }
}

/// The three model roles a pipeline needs.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub classifier: Arc<dyn Classifier>,
    pub embedder: Arc<dyn Embedder>,
}

impl Backends {
    pub fn stub(dim: usize) -> Self {
        Self {
            generator: Arc::new(StubGenerator::new()),
            classifier: Arc::new(KeywordClassifier::default()),
            embedder: Arc::new(HashEmbedder::new(dim)),
        }
    }

    pub fn from_descriptors(
        generation: &BackendDescriptor,
        classification: &BackendDescriptor,
        embedding: &BackendDescriptor,
        dim: usize,
    ) -> Result<Self, BackendError> {
        let generator: Arc<dyn Generator> = match generation.kind {
            BackendKind::Stub => Arc::new(StubGenerator::new()),
            BackendKind::Http => Arc::new(HttpGenerator::new(generation.clone())?),
        };
        let classifier: Arc<dyn Classifier> = match classification.kind {
            BackendKind::Stub => Arc::new(KeywordClassifier::default()),
            BackendKind::Http => Arc::new(HttpClassifier::new(classification.clone())?),
        };
        let embedder: Arc<dyn Embedder> = match embedding.kind {
            BackendKind::Stub => Arc::new(HashEmbedder::new(dim)),
            BackendKind::Http => Arc::new(HttpEmbedder::new(embedding.clone(), dim)?),
        };
        Ok(Self { generator, classifier, embedder })
    }
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").field("embedding_dim", &self.embedder.dim()).finish_non_exhaustive()
    }
}
