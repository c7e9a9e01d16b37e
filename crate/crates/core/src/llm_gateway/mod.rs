//! Provider-agnostic chat and embedding access.
//!
//! A [`Gateway`] wraps one provider configuration with a response cache,
//! bounded retries, a request-start rate limiter and an in-flight gate. The
//! gateway is `Sync` and meant to be shared by worker threads.

mod cache;
mod json_extract;
pub mod mock;
mod rate_limit;
mod remote;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheEntry, CacheHeader, CacheKey, ResponseCache};
pub use json_extract::{extract_json, ExtractError};
pub use mock::FaultInjection;
pub use rate_limit::{Clock, ConcurrencyGate, ManualClock, RateLimiter, SystemClock};
pub use remote::{OpenAiCompatibleChat, OpenAiCompatibleEmbeddings};

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "BIAS_AUDIT_CACHE_DIR";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server error {status}: {body}")]
    ServerError { status: u16, body: String },
    #[error("provider rejected request ({status}): {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("invalid provider response: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Transport failures, 429 and 5xx are retried; everything else is final.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited { .. }
                | GatewayError::Transport(_)
                | GatewayError::ServerError { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RemoteChat,
    RemoteEmbedding,
    Mock,
}

fn default_concurrency() -> usize {
    4
}
fn default_rpm() -> u32 {
    60
}
fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub provider_kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model_id: String,
    /// Name of the environment variable holding the credential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    /// Mock only: deterministic permanent failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_injection: Option<FaultInjection>,
}

pub const MAX_RETRIES_LIMIT: u32 = 10;

impl ProviderConfig {
    pub fn mock(model_id: impl Into<String>) -> Self {
        Self {
            provider_kind: ProviderKind::Mock,
            base_url: None,
            model_id: model_id.into(),
            api_key_env: None,
            max_concurrency: default_concurrency(),
            requests_per_minute: 1_000_000,
            max_retries: default_retries(),
            temperature: 0.0,
            timeout_secs: default_timeout(),
            max_output_tokens: None,
            fault_injection: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let fail = |msg: &str| Err(GatewayError::Config(msg.to_string()));
        if self.model_id.trim().is_empty() {
            return fail("model_id is empty");
        }
        if self.max_concurrency == 0 {
            return fail("max_concurrency must be at least 1");
        }
        if self.requests_per_minute == 0 {
            return fail("requests_per_minute must be at least 1");
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return fail("max_retries above 10");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return fail("temperature must be a non-negative number");
        }
        match self.provider_kind {
            ProviderKind::Mock => {
                if let Some(f) = &self.fault_injection {
                    if !(0.0..=1.0).contains(&f.fail_fraction) {
                        return fail("fault_injection.fail_fraction outside [0, 1]");
                    }
                }
            }
            ProviderKind::RemoteChat | ProviderKind::RemoteEmbedding => {
                if self.base_url.as_deref().is_none_or(str::is_empty) {
                    return fail("remote providers need base_url");
                }
                if self.api_key_env.as_deref().is_none_or(str::is_empty) {
                    return fail("remote providers need api_key_env");
                }
                if self.fault_injection.is_some() {
                    return fail("fault_injection is only valid for the mock provider");
                }
            }
        }
        Ok(())
    }

    /// Reads the credential from the configured environment variable.
    pub fn resolve_api_key(&self) -> Result<String, GatewayError> {
        let var = self
            .api_key_env
            .as_deref()
            .ok_or_else(|| GatewayError::Config("api_key_env not set".into()))?;
        match std::env::var(var) {
            Ok(v) if !v.is_empty() => Ok(v),
            _ => Err(GatewayError::Auth(format!(
                "environment variable {var} is not set"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt_text: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub raw_text: String,
    pub usage: Option<TokenUsage>,
    pub latency: Duration,
    pub retry_count: u32,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, text: &str, model_id: &str) -> Result<Vec<f64>, GatewayError>;
}

/// The mock provider as a backend pair.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub fault: Option<FaultInjection>,
}

impl ChatBackend for MockBackend {
    fn chat(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        if let Some(fault) = &self.fault {
            let key = crate::prompt::framed_paragraph(&req.prompt_text).unwrap_or(&req.prompt_text);
            if fault.should_fail(key) {
                return Err(GatewayError::ProviderRejected {
                    status: 400,
                    body: "injected fault".into(),
                });
            }
        }
        Ok(BackendReply {
            text: mock::respond(&req.prompt_text),
            usage: None,
        })
    }
}

impl EmbedBackend for MockBackend {
    fn embed(&self, text: &str, _model_id: &str) -> Result<Vec<f64>, GatewayError> {
        Ok(mock::mock_embedding(text))
    }
}

/// Exponential backoff with full jitter: attempt `k` sleeps a uniform
/// duration in `[0, min(cap, base * factor^k))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub factor: f64,
    pub cap: Duration,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        Self {
            max_retries,
            base: Duration::from_secs(1),
            factor: 2.0,
            cap: Duration::from_secs(60),
        }
    }

    pub fn ceiling(&self, attempt: u32) -> Duration {
        let secs = self.base.as_secs_f64() * self.factor.powi(attempt as i32);
        Duration::from_secs_f64(secs.min(self.cap.as_secs_f64()))
    }
}

/// Call counters, mostly for tests and run logs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
}

#[derive(Default)]
struct Counters {
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    retries: AtomicU64,
}

pub struct Gateway {
    config: ProviderConfig,
    chat: Option<Arc<dyn ChatBackend>>,
    embedder: Option<Arc<dyn EmbedBackend>>,
    cache: Option<ResponseCache>,
    limiter: RateLimiter,
    gate: ConcurrencyGate,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
    jitter: Mutex<ChaCha8Rng>,
    counters: Counters,
    embed_dim: OnceLock<usize>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("cache", &self.cache)
            .finish_non_exhaustive()
    }
}

pub struct GatewayBuilder {
    config: ProviderConfig,
    chat: Option<Arc<dyn ChatBackend>>,
    embedder: Option<Arc<dyn EmbedBackend>>,
    cache: Option<ResponseCache>,
    clock: Option<Arc<dyn Clock>>,
}

impl GatewayBuilder {
    pub fn chat_backend(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.chat = Some(backend);
        self
    }

    pub fn embed_backend(mut self, backend: Arc<dyn EmbedBackend>) -> Self {
        self.embedder = Some(backend);
        self
    }

    pub fn cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn build(self) -> Gateway {
        let config = self.config;
        Gateway {
            limiter: RateLimiter::new(config.requests_per_minute),
            gate: ConcurrencyGate::new(config.max_concurrency),
            retry: RetryPolicy::new(config.max_retries),
            clock: self.clock.unwrap_or_else(|| Arc::new(SystemClock::default())),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(0x6a69_7474_6572)),
            counters: Counters::default(),
            embed_dim: OnceLock::new(),
            chat: self.chat,
            embedder: self.embedder,
            cache: self.cache,
            config,
        }
    }
}

impl Gateway {
    pub fn builder(config: ProviderConfig) -> GatewayBuilder {
        GatewayBuilder {
            config,
            chat: None,
            embedder: None,
            cache: None,
            clock: None,
        }
    }

    /// Validates `config`, resolves credentials and wires the matching
    /// backend. `cache_dir` enables the on-disk cache.
    pub fn from_config(config: ProviderConfig, cache_dir: Option<PathBuf>) -> Result<Self, GatewayError> {
        config.validate()?;
        let timeout = Duration::from_secs(config.timeout_secs.max(1));
        let mut builder = Gateway::builder(config.clone());
        match config.provider_kind {
            ProviderKind::Mock => {
                let backend = Arc::new(MockBackend {
                    fault: config.fault_injection,
                });
                builder = builder.chat_backend(backend.clone()).embed_backend(backend);
            }
            ProviderKind::RemoteChat => {
                let key = config.resolve_api_key()?;
                let base = config.base_url.as_deref().unwrap_or_default();
                builder = builder.chat_backend(Arc::new(OpenAiCompatibleChat::new(base, key, timeout)?));
            }
            ProviderKind::RemoteEmbedding => {
                let key = config.resolve_api_key()?;
                let base = config.base_url.as_deref().unwrap_or_default();
                builder = builder
                    .embed_backend(Arc::new(OpenAiCompatibleEmbeddings::new(base, key, timeout)?));
            }
        }
        if let Some(dir) = cache_dir {
            let cache = ResponseCache::open(&dir)
                .map_err(|e| GatewayError::Config(format!("cache dir {}: {e}", dir.display())))?;
            builder = builder.cache(cache);
        }
        Ok(builder.build())
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            backend_calls: self.counters.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.counters.cache_hits.load(Ordering::Relaxed),
            retries: self.counters.retries.load(Ordering::Relaxed),
        }
    }

    /// Request for `prompt` with this gateway's model and sampling settings.
    pub fn request(&self, prompt: impl Into<String>) -> ChatRequest {
        ChatRequest {
            prompt_text: prompt.into(),
            model_id: self.config.model_id.clone(),
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
        }
    }

    pub fn complete_prompt(&self, prompt: &str) -> Result<ChatResponse, GatewayError> {
        self.complete(&self.request(prompt))
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if req.prompt_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompt_text is empty".into()));
        }
        let backend = self
            .chat
            .as_ref()
            .ok_or_else(|| GatewayError::Config("provider has no chat endpoint".into()))?;
        let started = Instant::now();
        let key = CacheKey::chat(&req.model_id, req.temperature, &req.prompt_text);
        if let Some(entry) = self.cache.as_ref().and_then(|c| c.load(&key)) {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(ChatResponse {
                raw_text: entry.value,
                usage: None,
                latency: started.elapsed(),
                retry_count: 0,
                from_cache: true,
            });
        }
        let (reply, retry_count) = self.with_retries(|| backend.chat(req))?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.store(&key, "chat", &req.model_id, &reply.text) {
                log::warn!("cache write failed: {e}");
            }
        }
        Ok(ChatResponse {
            raw_text: reply.text,
            usage: reply.usage,
            latency: started.elapsed(),
            retry_count,
            from_cache: false,
        })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("text to embed is empty".into()));
        }
        let backend = self
            .embedder
            .as_ref()
            .ok_or_else(|| GatewayError::Config("provider has no embedding endpoint".into()))?;
        let model = self.config.model_id.as_str();
        let key = CacheKey::embedding(model, text);
        let cached = self
            .cache
            .as_ref()
            .and_then(|c| c.load(&key))
            .and_then(|e| serde_json::from_str::<Vec<f64>>(&e.value).ok());
        let values = match cached {
            Some(v) => {
                self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                v
            }
            None => {
                let (v, _) = self.with_retries(|| backend.embed(text, model))?;
                if let Some(cache) = &self.cache {
                    let encoded = serde_json::to_string(&v).map_err(|e| {
                        GatewayError::InvalidResponse(format!("non-finite embedding: {e}"))
                    })?;
                    if let Err(e) = cache.store(&key, "embedding", model, &encoded) {
                        log::warn!("cache write failed: {e}");
                    }
                }
                v
            }
        };
        if values.is_empty() || values.iter().any(|x| !x.is_finite()) {
            return Err(GatewayError::InvalidResponse(
                "embedding is empty or has non-finite values".into(),
            ));
        }
        let dim = *self.embed_dim.get_or_init(|| values.len());
        if dim != values.len() {
            return Err(GatewayError::InvalidResponse(format!(
                "embedding dimension {} differs from {dim} seen earlier for {model}",
                values.len()
            )));
        }
        Ok(EmbeddingVector {
            values,
            model_id: model.to_string(),
        })
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> Result<T, GatewayError>,
    ) -> Result<(T, u32), GatewayError> {
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.gate.acquire();
                self.limiter.acquire(self.clock.as_ref());
                self.counters.backend_calls.fetch_add(1, Ordering::Relaxed);
                call()
            };
            match result {
                Ok(v) => return Ok((v, attempt)),
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    let ceiling = self.retry.ceiling(attempt);
                    let delay = {
                        let mut rng = self.jitter.lock().expect("jitter lock");
                        ceiling.mul_f64(rng.gen::<f64>())
                    };
                    log::debug!("transient provider error ({e}); retrying in {delay:?}");
                    self.counters.retries.fetch_add(1, Ordering::Relaxed);
                    self.clock.sleep(delay);
                    attempt += 1;
                }
                Err(GatewayError::RateLimited { .. }) => {
                    return Err(GatewayError::RateLimited {
                        attempts: attempt + 1,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Cache directory: `BIAS_AUDIT_CACHE_DIR` if set, else `default`.
pub fn cache_dir_or(default: PathBuf) -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or(default)
}
