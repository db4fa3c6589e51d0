//! HTTP providers.
//!
//! Wire contract:
//! - `POST {base_url}/embed` with `{model, texts[]}` returns `{vectors[][]}`.
//! - `POST {base_url}/chat` with `{model, system, user, temperature, max_tokens}`
//!   returns `{text}`.
//!
//! Transport errors, 429 and 5xx responses are retried with exponential
//! backoff. A call never takes longer than `timeout × (max_retries + 1)`.

use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{check_texts, ChatModel, ChatRequest, Embedder, EmbeddingVector, ProviderConfig, ProviderError};

struct Client {
    cfg: ProviderConfig,
    agent: ureq::Agent,
    base_url: String,
    model: String,
}

impl Client {
    fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            base_url: cfg.base_url.clone().unwrap_or_default().trim_end_matches('/').to_string(),
            model: cfg.model_name.clone().unwrap_or_default(),
            agent,
            cfg,
        })
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.cfg.api_key_env).ok().filter(|k| !k.is_empty())
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ProviderError> {
        let url = format!("{}/{path}", self.base_url);
        let timeout = self.cfg.timeout();
        let deadline = Instant::now() + timeout * (self.cfg.max_retries + 1);
        let mut backoff = Duration::from_millis(self.cfg.backoff_ms);
        let mut last_error = String::new();

        for attempt in 0..=self.cfg.max_retries {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            if attempt > 0 {
                let pause = backoff.min(remaining);
                thread::sleep(pause);
                backoff *= 2;
                if deadline.saturating_duration_since(Instant::now()).is_zero() {
                    break;
                }
            }
            let per_attempt = timeout.min(deadline.saturating_duration_since(Instant::now()));
            let mut req = self
                .agent
                .post(&url)
                .config()
                .timeout_global(Some(per_attempt))
                .build()
                .header("Content-Type", "application/json");
            if let Some(key) = self.api_key() {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp
                            .body_mut()
                            .read_json::<R>()
                            .map_err(|e| ProviderError::Unavailable(format!("bad response body from {url}: {e}")));
                    }
                    last_error = format!("{url} returned HTTP {status}");
                    if status != 429 && status < 500 {
                        return Err(ProviderError::Unavailable(last_error));
                    }
                }
                Err(e) => last_error = format!("{url}: {e}"),
            }
        }
        Err(ProviderError::Unavailable(format!(
            "{last_error} (after {} attempts)",
            self.cfg.max_retries + 1
        )))
    }
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    model: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub struct HttpEmbedder {
    client: Client,
    dim: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            client: Client::new(cfg)?,
            dim: OnceLock::new(),
        })
    }

    /// Dimension learned from the first response, if any call succeeded.
    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }
}

impl Embedder for HttpEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        check_texts(texts)?;
        let resp: EmbedResponse = self.client.post(
            "embed",
            &EmbedBody {
                model: &self.client.model,
                texts,
            },
        )?;
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError::Unavailable(format!(
                "embedding service returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        let expected = *self.dim.get_or_init(|| resp.vectors.first().map_or(0, Vec::len));
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != expected {
                    return Err(ProviderError::DimensionMismatch { expected, got: v.len() });
                }
                EmbeddingVector::new(v)
            })
            .collect()
    }
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    system: &'a str,
    user: &'a str,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    text: String,
}

pub struct HttpChat {
    client: Client,
}

impl HttpChat {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            client: Client::new(cfg)?,
        })
    }
}

impl ChatModel for HttpChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let resp: ChatResponse = self.client.post(
            "chat",
            &ChatBody {
                model: &self.client.model,
                system: &req.system_prompt,
                user: &req.user_prompt,
                temperature: req.temperature,
                max_tokens: req.max_tokens,
            },
        )?;
        let text = resp.text.trim().to_string();
        if text.is_empty() {
            return Err(ProviderError::EmptyCompletion);
        }
        Ok(text)
    }
}
