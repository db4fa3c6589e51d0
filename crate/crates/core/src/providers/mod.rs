//! Embedding and chat-completion providers.
//!
//! Two implementations of each contract: an HTTP client for an external
//! service ([`http`]) and a deterministic offline stub ([`stub`]) whose
//! outputs depend only on its seed and inputs.

pub mod http;
pub mod stub;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::{HttpChat, HttpEmbedder};
pub use stub::{StubChat, StubEmbedder, STUB_DIM};

pub const EMBED_API_KEY_ENV: &str = "LEXGUIDE_EMBED_API_KEY";
pub const CHAT_API_KEY_ENV: &str = "LEXGUIDE_CHAT_API_KEY";
pub const DEFAULT_TEMPERATURE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("invalid provider request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider config: {0}")]
    Config(String),
}

/// A dense embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Fails if any component is NaN or infinite.
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::InvalidRequest("embedding has non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }

    /// Arithmetic mean of equal-length vectors; `None` when empty.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a EmbeddingVector>) -> Option<Self> {
        let mut iter = vectors.into_iter();
        let first = iter.next()?;
        let mut sum = first.0.clone();
        let mut n = 1usize;
        for v in iter {
            for (s, x) in sum.iter_mut().zip(&v.0) {
                *s += x;
            }
            n += 1;
        }
        let n = n as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        Some(Self(sum))
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 256,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

pub trait Embedder: Send + Sync {
    /// Embed every text; output is order-aligned with the input.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let mut v = self.embed_texts(&[text.to_string()])?;
        v.pop().ok_or_else(|| ProviderError::Unavailable("no vector returned".into()))
    }
}

pub trait ChatModel: Send + Sync {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;
}

pub(crate) fn check_texts(texts: &[String]) -> Result<(), ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::InvalidRequest("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::InvalidRequest(format!("text {i} is empty")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    #[default]
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Stub,
            base_url: None,
            model_name: None,
            api_key_env: CHAT_API_KEY_ENV.into(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_ms: 250,
            seed: 0,
        }
    }
}

impl ProviderConfig {
    pub fn stub(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn http(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Http,
            base_url: Some(base_url.into()),
            model_name: Some(model_name.into()),
            ..Self::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.kind == ProviderKind::Http {
            if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                return Err(ProviderError::Config("http provider requires base_url".into()));
            }
            if self.model_name.as_deref().is_none_or(|m| m.trim().is_empty()) {
                return Err(ProviderError::Config("http provider requires model_name".into()));
            }
        }
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

pub fn build_embedder(cfg: &ProviderConfig) -> Result<Arc<dyn Embedder>, ProviderError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ProviderKind::Stub => Arc::new(StubEmbedder::new(cfg.seed)),
        ProviderKind::Http => Arc::new(HttpEmbedder::new(cfg.clone())?),
    })
}

pub fn build_chat(cfg: &ProviderConfig) -> Result<Arc<dyn ChatModel>, ProviderError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ProviderKind::Stub => Arc::new(StubChat::new(cfg.seed)),
        ProviderKind::Http => Arc::new(HttpChat::new(cfg.clone())?),
    })
}
