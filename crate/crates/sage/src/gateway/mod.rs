//! Clients for chat-completion and embedding endpoints, the pipeline's
//! prompt templates, response caching, and offline stub providers.
//!
//! The [`Gateway`] wraps a chat provider and an embedding provider with a
//! shared response cache, a retry policy for transient failures, and a
//! global bound on in-flight provider calls. Callers see blocking
//! operations; the gateway may be shared freely across threads.

pub mod cache;
pub mod http;
pub mod prompts;
pub mod stub;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::hex_digest;
use crate::embed::{EmbedError, TextEmbedder};
use crate::metric::{EmbeddingVector, MetricError};
use cache::{CacheValue, ResponseCache};
use prompts::{PromptKind, PromptTemplate};
use stub::{StubChatProvider, StubConfig, StubEmbeddingProvider};

/// Default bound on simultaneously in-flight provider calls.
pub const DEFAULT_CONCURRENCY: usize = 8;
/// Default number of paraphrases requested per question.
pub const DEFAULT_PARAPHRASE_COUNT: usize = 5;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{what} must not be empty")]
    EmptyInput { what: &'static str },
    #[error("temperature {0} is negative")]
    NegativeTemperature(f64),
    #[error("paraphrase count must be at least 1")]
    ZeroParaphrases,
    #[error("placeholder \"{name}\" is not bound")]
    UnboundPlaceholder { name: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint throttled or failed transiently: {0}")]
    Throttled(String),
    #[error("endpoint rejected request with status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("completion contains no paraphrase candidates")]
    UnparseableParaphrases,
    #[error("retries exhausted after {attempts} attempts")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        last: Box<GatewayError>,
    },
    #[error("embedding batch returned {got} vectors for {expected} inputs")]
    EmbeddingCountMismatch { got: usize, expected: usize },
    #[error("inconsistent embedding dimensions in one response: {0} vs {1}")]
    InconsistentDimensions(usize, usize),
    #[error("invalid embedding from provider: {0}")]
    InvalidEmbedding(#[from] MetricError),
    #[error("cache error: {0}")]
    Cache(String),
}

impl GatewayError {
    /// Transient failures are worth retrying; everything else is not.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Transport(_) | Self::Throttled(_))
    }
}

/// Settings for one generation call.
///
/// `sample_index` distinguishes repeated draws at the same settings so
/// nonzero-temperature sampling stays reproducible through the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
}

impl GenerationConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: 256,
            sample_index: 0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_sample_index(mut self, sample_index: u32) -> Self {
        self.sample_index = sample_index;
        self
    }
}

/// One chat call as seen by a provider. `kind` and `bindings` describe the
/// template the prompt was rendered from; remote providers only need the
/// prompt, stubs use the structure.
pub struct ChatRequest<'a> {
    pub prompt: &'a str,
    pub config: &'a GenerationConfig,
    pub kind: Option<PromptKind>,
    pub bindings: &'a [(&'a str, &'a str)],
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

/// Retry policy for transient provider failures: exponential backoff
/// starting at `initial_backoff`, doubling per attempt.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Counting semaphore bounding in-flight provider calls.
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut count = self.in_flight.lock().expect("limiter lock");
        while *count >= self.max {
            count = self.released.wait(count).expect("limiter wait");
        }
        *count += 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.limiter.in_flight.lock().expect("limiter lock");
        *count -= 1;
        self.limiter.released.notify_one();
    }
}

/// Point-in-time counters for observability and cache verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct GatewayStats {
    /// Chat provider invocations (cache misses that went out).
    pub chat_provider_calls: u64,
    /// Embedding provider invocations.
    pub embed_provider_calls: u64,
    /// Requests answered from the response cache.
    pub cache_hits: u64,
}

pub struct Gateway {
    chat: Box<dyn ChatProvider>,
    embedder: Box<dyn EmbeddingBackend>,
    embedder_model: String,
    cache: Option<ResponseCache>,
    limiter: Limiter,
    retry: RetryPolicy,
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(
        chat: Box<dyn ChatProvider>,
        embedder: Box<dyn EmbeddingBackend>,
        embedder_model: impl Into<String>,
    ) -> Self {
        Self {
            chat,
            embedder,
            embedder_model: embedder_model.into(),
            cache: None,
            limiter: Limiter::new(DEFAULT_CONCURRENCY),
            retry: RetryPolicy::default(),
            chat_calls: AtomicU64::new(0),
            embed_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    /// Fully offline gateway backed by the deterministic stubs.
    pub fn offline(config: StubConfig) -> Self {
        Self::new(
            Box::new(StubChatProvider::new(config)),
            Box::new(StubEmbeddingProvider::new(config.seed)),
            "stub-embedder",
        )
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.limiter = Limiter::new(limit);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            chat_provider_calls: self.chat_calls.load(Ordering::Relaxed),
            embed_provider_calls: self.embed_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    fn retrying<T>(
        &self,
        mut call: impl FnMut() -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        let mut backoff = self.retry.initial_backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(value) => return Ok(value),
                Err(e) if e.is_transient() && attempt < self.retry.max_attempts => {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                Err(e) if e.is_transient() => {
                    return Err(GatewayError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Sends a rendered prompt, consulting the cache first.
    pub fn chat_complete(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<String, GatewayError> {
        self.complete_internal(prompt, config, None, &[])
    }

    fn complete_internal(
        &self,
        prompt: &str,
        config: &GenerationConfig,
        kind: Option<PromptKind>,
        bindings: &[(&str, &str)],
    ) -> Result<String, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyInput { what: "prompt" });
        }
        if config.temperature < 0.0 {
            return Err(GatewayError::NegativeTemperature(config.temperature));
        }
        let key = chat_cache_key(config, prompt);
        if let Some(cache) = &self.cache {
            if let Some(CacheValue::Text(text)) = cache.get(&key) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(text);
            }
        }
        let request = ChatRequest {
            prompt,
            config,
            kind,
            bindings,
        };
        let completion = self.retrying(|| {
            let _guard = self.limiter.acquire();
            self.chat_calls.fetch_add(1, Ordering::Relaxed);
            self.chat.complete(&request)
        })?;
        if completion.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        if let Some(cache) = &self.cache {
            cache.put_if_absent(&key, CacheValue::Text(completion.clone()))?;
        }
        Ok(completion)
    }

    /// Embeds a batch of texts, one vector per input in order, serving and
    /// filling the cache per text.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyInput { what: "text batch" });
        }
        for text in texts {
            if text.trim().is_empty() {
                return Err(GatewayError::EmptyInput { what: "text" });
            }
        }
        let keys: Vec<String> = texts.iter().map(|t| embed_cache_key(&self.embedder_model, t)).collect();
        let mut results: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        let mut missing: Vec<usize> = Vec::new();
        if let Some(cache) = &self.cache {
            for (i, key) in keys.iter().enumerate() {
                if let Some(CacheValue::Embedding(components)) = cache.get(key) {
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                    results[i] = Some(EmbeddingVector::new(components)?);
                } else {
                    missing.push(i);
                }
            }
        } else {
            missing = (0..texts.len()).collect();
        }

        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fresh = self.retrying(|| {
                let _guard = self.limiter.acquire();
                self.embed_calls.fetch_add(1, Ordering::Relaxed);
                self.embedder.embed(&batch)
            })?;
            if fresh.len() != batch.len() {
                return Err(GatewayError::EmbeddingCountMismatch {
                    got: fresh.len(),
                    expected: batch.len(),
                });
            }
            let dim = fresh[0].len();
            for vector in &fresh {
                if vector.len() != dim {
                    return Err(GatewayError::InconsistentDimensions(dim, vector.len()));
                }
            }
            for (&i, components) in missing.iter().zip(fresh) {
                if let Some(cache) = &self.cache {
                    cache.put_if_absent(&keys[i], CacheValue::Embedding(components.clone()))?;
                }
                results[i] = Some(EmbeddingVector::new(components)?);
            }
        }
        Ok(results.into_iter().map(|v| v.expect("all slots filled")).collect())
    }

    /// Renders the paraphrase prompt for a question and parses up to `k`
    /// candidates out of the completion.
    ///
    /// Candidates are read one per enumerated line (`1.`, `2)`, `-` ...),
    /// falling back to plain non-empty lines when nothing is enumerated.
    /// Empty candidates, repeats of the source, and duplicates are dropped.
    pub fn generate_paraphrases(
        &self,
        question: &str,
        k: usize,
        config: &GenerationConfig,
    ) -> Result<Vec<String>, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::EmptyInput { what: "question" });
        }
        if k == 0 {
            return Err(GatewayError::ZeroParaphrases);
        }
        let template = PromptTemplate::for_kind(PromptKind::Paraphrase);
        let bindings = [("question", question)];
        let prompt = template.render(&bindings)?;
        let completion =
            self.complete_internal(&prompt, config, Some(PromptKind::Paraphrase), &bindings)?;
        parse_paraphrases(&completion, question, k)
    }

    /// Generates an answer to one question.
    pub fn generate_answer(
        &self,
        question: &str,
        config: &GenerationConfig,
    ) -> Result<String, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::EmptyInput { what: "question" });
        }
        let template = PromptTemplate::for_kind(PromptKind::Answer);
        let bindings = [("question", question)];
        let prompt = template.render(&bindings)?;
        let answer =
            self.complete_internal(&prompt, config, Some(PromptKind::Answer), &bindings)?;
        Ok(answer.trim().to_string())
    }

    /// Generates an answer while instructing the model to follow a given
    /// rule of thumb.
    pub fn generate_answer_with_rot(
        &self,
        question: &str,
        rot: &str,
        config: &GenerationConfig,
    ) -> Result<String, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::EmptyInput { what: "question" });
        }
        if rot.trim().is_empty() {
            return Err(GatewayError::EmptyInput { what: "rule of thumb" });
        }
        let template = PromptTemplate::for_kind(PromptKind::AnswerWithRot);
        let bindings = [("rot", rot), ("question", question)];
        let prompt = template.render(&bindings)?;
        let answer =
            self.complete_internal(&prompt, config, Some(PromptKind::AnswerWithRot), &bindings)?;
        Ok(answer.trim().to_string())
    }

    /// Infers the rule of thumb behind one question-answer pair.
    pub fn generate_rot(
        &self,
        question: &str,
        answer: &str,
        config: &GenerationConfig,
    ) -> Result<String, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::EmptyInput { what: "question" });
        }
        if answer.trim().is_empty() {
            return Err(GatewayError::EmptyInput { what: "answer" });
        }
        let template = PromptTemplate::for_kind(PromptKind::Rot);
        let bindings = [("question", question), ("answer", answer)];
        let prompt = template.render(&bindings)?;
        let completion =
            self.complete_internal(&prompt, config, Some(PromptKind::Rot), &bindings)?;
        let rot = completion
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .ok_or(GatewayError::EmptyCompletion)?;
        Ok(rot.to_string())
    }
}

/// Gateways act as an embedding source for the similarity backends.
impl TextEmbedder for Gateway {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Gateway::embed(self, texts).map_err(|e| EmbedError::Provider(e.to_string()))
    }
}

fn chat_cache_key(config: &GenerationConfig, prompt: &str) -> String {
    cache_key_parts(&[
        b"chat",
        config.model_id.as_bytes(),
        prompt.as_bytes(),
        &config.temperature.to_bits().to_le_bytes(),
        &config.sample_index.to_le_bytes(),
    ])
}

fn embed_cache_key(model_id: &str, text: &str) -> String {
    cache_key_parts(&[
        b"embed",
        model_id.as_bytes(),
        text.as_bytes(),
        &0.0f64.to_bits().to_le_bytes(),
        &0u32.to_le_bytes(),
    ])
}

fn cache_key_parts(parts: &[&[u8]]) -> String {
    let mut buffer = Vec::new();
    for part in parts {
        buffer.extend_from_slice(&(part.len() as u64).to_le_bytes());
        buffer.extend_from_slice(part);
    }
    hex_digest(&buffer)
}

/// Strips an enumeration prefix like `3.`, `12)`, `-`, `*` from a line.
fn strip_enumeration(line: &str) -> Option<&str> {
    let trimmed = line.trim();
    let digits = trimmed.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &trimmed[digits..];
        if let Some(stripped) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return Some(stripped.trim());
        }
    }
    trimmed
        .strip_prefix("- ")
        .or_else(|| trimmed.strip_prefix("* "))
        .map(str::trim)
}

fn parse_paraphrases(
    completion: &str,
    source: &str,
    k: usize,
) -> Result<Vec<String>, GatewayError> {
    let enumerated: Vec<&str> = completion.lines().filter_map(strip_enumeration).collect();
    let lines: Vec<&str> = if enumerated.is_empty() {
        // Permissive fallback: any non-empty line is a candidate.
        completion.lines().map(str::trim).collect()
    } else {
        enumerated
    };
    let mut seen = std::collections::HashSet::new();
    let candidates: Vec<String> = lines
        .into_iter()
        .filter(|l| !l.is_empty() && *l != source.trim())
        .filter(|l| seen.insert(l.to_string()))
        .take(k)
        .map(str::to_string)
        .collect();
    if candidates.is_empty() && completion.trim().is_empty() {
        return Err(GatewayError::UnparseableParaphrases);
    }
    Ok(candidates)
}
