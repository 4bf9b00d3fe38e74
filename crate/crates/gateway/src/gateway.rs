use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::backend::{ChatBackend, EmbedBackend};
use crate::cache::ResponseCache;
use crate::error::{GatewayError, Result};
use crate::key::{cache_key, embed_key};
use crate::limit::{InFlightLimit, RateLimiter, RetryPolicy};
use crate::types::{BackendKind, ChatRequest, ChatResponse, Completion, TokenEmbeddings};

pub const DEFAULT_RATE_PER_SEC: f64 = 4.0;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

/// Snapshot of gateway counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub llm_calls: u64,
    pub mllm_calls: u64,
    pub embed_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
    pub failures: u64,
}

impl GatewayStats {
    /// Requests that reached a backend.
    pub fn backend_calls(&self) -> u64 {
        self.llm_calls + self.mllm_calls + self.embed_calls
    }
}

#[derive(Default)]
struct Counters {
    llm_calls: AtomicU64,
    mllm_calls: AtomicU64,
    embed_calls: AtomicU64,
    cache_hits: AtomicU64,
    retries: AtomicU64,
    failures: AtomicU64,
}

/// Shared entry point for chat, multimodal chat and embedding calls.
pub struct Gateway {
    llm: Option<Arc<dyn ChatBackend>>,
    mllm: Option<Arc<dyn ChatBackend>>,
    embed: Option<Arc<dyn EmbedBackend>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    llm_limiter: RateLimiter,
    mllm_limiter: RateLimiter,
    embed_limiter: RateLimiter,
    in_flight: InFlightLimit,
    embed_memo: Mutex<HashMap<String, TokenEmbeddings>>,
    counters: Counters,
}

pub struct GatewayBuilder {
    llm: Option<Arc<dyn ChatBackend>>,
    mllm: Option<Arc<dyn ChatBackend>>,
    embed: Option<Arc<dyn EmbedBackend>>,
    cache_dir: Option<PathBuf>,
    retry: RetryPolicy,
    rate_per_sec: f64,
    max_in_flight: usize,
}

impl GatewayBuilder {
    pub fn llm(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.llm = Some(backend);
        self
    }

    pub fn mllm(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.mllm = Some(backend);
        self
    }

    pub fn embed(mut self, backend: Arc<dyn EmbedBackend>) -> Self {
        self.embed = Some(backend);
        self
    }

    pub fn cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Requests per second per backend; zero or negative disables pacing.
    pub fn rate_per_sec(mut self, rate: f64) -> Self {
        self.rate_per_sec = rate;
        self
    }

    pub fn max_in_flight(mut self, max: usize) -> Self {
        self.max_in_flight = max;
        self
    }

    pub fn build(self) -> Result<Gateway> {
        let cache = self.cache_dir.map(ResponseCache::open).transpose()?;
        Ok(Gateway {
            llm: self.llm,
            mllm: self.mllm,
            embed: self.embed,
            cache,
            retry: self.retry,
            llm_limiter: RateLimiter::new(self.rate_per_sec),
            mllm_limiter: RateLimiter::new(self.rate_per_sec),
            embed_limiter: RateLimiter::new(self.rate_per_sec),
            in_flight: InFlightLimit::new(self.max_in_flight),
            embed_memo: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        })
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            llm: None,
            mllm: None,
            embed: None,
            cache_dir: None,
            retry: RetryPolicy::default(),
            rate_per_sec: DEFAULT_RATE_PER_SEC,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn stats(&self) -> GatewayStats {
        let c = &self.counters;
        GatewayStats {
            llm_calls: c.llm_calls.load(Ordering::SeqCst),
            mllm_calls: c.mllm_calls.load(Ordering::SeqCst),
            embed_calls: c.embed_calls.load(Ordering::SeqCst),
            cache_hits: c.cache_hits.load(Ordering::SeqCst),
            retries: c.retries.load(Ordering::SeqCst),
            failures: c.failures.load(Ordering::SeqCst),
        }
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn embed_model_id(&self) -> Option<&str> {
        self.embed.as_deref().map(|b| b.model_id())
    }

    /// Model id reported by the configured chat backend name, for provenance.
    pub fn has_backend(&self, kind: BackendKind) -> bool {
        match kind {
            BackendKind::Llm => self.llm.is_some(),
            BackendKind::Mllm => self.mllm.is_some(),
        }
    }

    fn with_retry<T>(&self, backend: &str, limiter: &RateLimiter, counter: &AtomicU64, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            limiter.acquire();
            let result = {
                let _slot = self.in_flight.enter();
                counter.fetch_add(1, Ordering::SeqCst);
                call()
            };
            match result {
                Ok(v) => return Ok(v),
                Err(err) if err.is_retryable() && attempt + 1 < attempts => {
                    let wait = self.retry.delay(attempt, err.retry_after());
                    debug!(backend, attempt, ?wait, %err, "retrying");
                    self.counters.retries.fetch_add(1, Ordering::SeqCst);
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err(err) => {
                    self.counters.failures.fetch_add(1, Ordering::SeqCst);
                    return Err(err);
                }
            }
        }
    }

    /// Sends a chat request, consulting and filling the response cache.
    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse> {
        req.validate()?;
        let (backend, limiter, counter) = match req.backend {
            BackendKind::Llm => (&self.llm, &self.llm_limiter, &self.counters.llm_calls),
            BackendKind::Mllm => (&self.mllm, &self.mllm_limiter, &self.counters.mllm_calls),
        };
        let backend = backend.as_ref().ok_or_else(|| GatewayError::NotConfigured {
            backend: req.backend.to_string(),
        })?;

        let key = cache_key(req);
        let lock = self.cache.as_ref().map(|c| c.key_lock(&key));
        let _guard = lock.as_ref().map(|l| l.lock().expect("cache key lock poisoned"));
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get::<Completion>(&key) {
                self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(ChatResponse {
                    text: hit.text,
                    model_id: hit.model_id,
                    latency_ms: 0,
                    cached: true,
                    raw_finish_reason: hit.finish_reason,
                });
            }
        }

        let start = Instant::now();
        let completion = self.with_retry(backend.name(), limiter, counter, || backend.complete(req))?;
        let latency_ms = start.elapsed().as_millis() as u64;
        if let Some(cache) = &self.cache {
            if let Err(err) = cache.put(&key, &completion) {
                warn!(%err, key, "failed to write cache entry");
            }
        }
        Ok(ChatResponse {
            text: completion.text,
            model_id: completion.model_id,
            latency_ms,
            cached: false,
            raw_finish_reason: completion.finish_reason,
        })
    }

    /// Per-token embeddings for `text`, memoized in memory and in the disk cache.
    pub fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let backend = self.embed.as_ref().ok_or_else(|| GatewayError::NotConfigured {
            backend: "embed".into(),
        })?;
        let key = embed_key(backend.model_id(), text);
        if let Some(hit) = self.embed_memo.lock().expect("embed memo poisoned").get(&key) {
            self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit.clone());
        }
        let lock = self.cache.as_ref().map(|c| c.key_lock(&key));
        let _guard = lock.as_ref().map(|l| l.lock().expect("cache key lock poisoned"));
        let cached = self.cache.as_ref().and_then(|c| c.get::<TokenEmbeddings>(&key));
        let out = match cached.filter(|e| e.validate().is_ok()) {
            Some(hit) => {
                self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
                hit
            }
            None => {
                let out = self.with_retry("embed", &self.embed_limiter, &self.counters.embed_calls, || {
                    backend.embed(text)
                })?;
                out.validate().map_err(|message| GatewayError::MalformedResponse {
                    backend: "embed".into(),
                    message,
                })?;
                if let Some(cache) = &self.cache {
                    if let Err(err) = cache.put(&key, &out) {
                        warn!(%err, key, "failed to write cache entry");
                    }
                }
                out
            }
        };
        self.embed_memo
            .lock()
            .expect("embed memo poisoned")
            .insert(key, out.clone());
        Ok(out)
    }
}
