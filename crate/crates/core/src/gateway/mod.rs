//! Chat-completion gateway: one entry point for every model call.
//!
//! The gateway owns request hashing, an in-process response cache, retry
//! with backoff on transport failures, bounded-parallel batch execution, and
//! record/replay stores so any pipeline run can be captured once and re-run
//! byte-identically without network access.
//!
//! Requests are content-addressed: the digest covers backend id, model id,
//! both message bodies, and the sampling parameters, so any change to any of
//! them produces a different key. The free-form `tag` is excluded; it exists
//! for logs and manifests only.

mod backend;
mod scripted;
mod store;

pub use backend::{BackendError, ChatBackend, HttpBackend};
pub use scripted::ScriptedBackend;
pub use store::{ReplayBackend, ResponseStore, StoreMeta, StoredResponse};

use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

use crate::error::ErrorCategory;

/// Hex-encoded SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One chat completion request: a system message, a user message, and the
/// sampling parameters that matter for reproducibility.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    /// Free-form label for logs and manifests; never part of the digest.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: 1024,
            seed: 0,
            tag: String::new(),
        }
    }

    pub fn with_sampling(mut self, temperature: f64, max_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }
}

/// Completion text plus the identity of whichever backend produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub backend_id: String,
    pub model_id: String,
    /// True when served from the in-process cache or a replay store.
    pub cached: bool,
}

/// Content address for a request under a given backend and model. Every
/// variable-length field is length-framed before hashing so no two distinct
/// requests can collide by concatenation.
pub fn cache_key(backend_id: &str, model_id: &str, req: &ChatRequest) -> String {
    let mut h = Sha256::new();
    for field in [backend_id, model_id, &req.system, &req.user] {
        h.update((field.len() as u64).to_be_bytes());
        h.update(field.as_bytes());
    }
    h.update(req.temperature.to_bits().to_be_bytes());
    h.update(req.max_tokens.to_be_bytes());
    h.update(req.seed.to_be_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend protocol error: {message}")]
    Protocol { message: String },
    #[error("no recorded response for request digest {digest} (tag: {tag})")]
    ReplayMiss { digest: String, tag: String },
    #[error("response store: {0}")]
    Store(String),
}

impl GatewayError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            GatewayError::Transport { .. } => ErrorCategory::Transport,
            GatewayError::Protocol { .. } => ErrorCategory::Parse,
            GatewayError::ReplayMiss { .. } => ErrorCategory::Validation,
            GatewayError::Store(_) => ErrorCategory::Validation,
        }
    }
}

type SleepFn = Box<dyn Fn(Duration) + Send + Sync>;

/// Gateway over one backend, with caching, retries, and optional recording.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    recorder: Option<ResponseStore>,
    cache: Mutex<HashMap<String, String>>,
    retries: u32,
    backoff: Vec<Duration>,
    max_parallel: usize,
    sleep: SleepFn,
}

impl Gateway {
    /// Live gateway with the default retry policy: two retries on transport
    /// failure, backing off 500 ms then 2 s.
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Gateway {
            backend,
            recorder: None,
            cache: Mutex::new(HashMap::new()),
            retries: 2,
            backoff: vec![Duration::from_millis(500), Duration::from_millis(2000)],
            max_parallel: 4,
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Record every completion into `dir` alongside a `meta.json` naming the
    /// backend and model, so a later replay resolves identical digests.
    pub fn recording(backend: Box<dyn ChatBackend>, dir: &Path) -> Result<Self, GatewayError> {
        let store = ResponseStore::create(dir, backend.id(), backend.model_id())?;
        let mut gw = Gateway::new(backend);
        gw.recorder = Some(store);
        Ok(gw)
    }

    /// Serve exclusively from a recorded store; any unrecorded request fails.
    pub fn replay(dir: &Path) -> Result<Self, GatewayError> {
        let backend = ReplayBackend::open(dir)?;
        Ok(Gateway::new(Box::new(backend)))
    }

    pub fn with_retries(mut self, retries: u32, backoff: Vec<Duration>) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    pub fn with_max_parallel(mut self, max_parallel: usize) -> Self {
        self.max_parallel = max_parallel.max(1);
        self
    }

    /// Replace the inter-retry sleep, letting tests observe backoff without
    /// waiting it out.
    pub fn with_sleeper(mut self, sleep: SleepFn) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn max_parallel(&self) -> usize {
        self.max_parallel
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    /// Digest of `req` under this gateway's backend and model.
    pub fn digest(&self, req: &ChatRequest) -> String {
        cache_key(self.backend.id(), self.backend.model_id(), req)
    }

    /// Complete one request, serving repeats from cache and retrying
    /// transport failures per the configured policy.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = self.digest(req);
        if let Some(content) = self.cache.lock().unwrap().get(&key).cloned() {
            return Ok(ChatResponse {
                content,
                backend_id: self.backend.id().to_string(),
                model_id: self.backend.model_id().to_string(),
                cached: true,
            });
        }

        let mut attempt = 0u32;
        let content = loop {
            match self.backend.complete(req) {
                Ok(content) => break content,
                Err(BackendError::Transport(message)) if attempt < self.retries => {
                    let pause = self
                        .backoff
                        .get(attempt as usize)
                        .or_else(|| self.backoff.last())
                        .copied()
                        .unwrap_or(Duration::ZERO);
                    log::warn!(
                        "transport failure (attempt {}): {message}; retrying in {pause:?}",
                        attempt + 1
                    );
                    (self.sleep)(pause);
                    attempt += 1;
                }
                Err(err) => return Err(self.classify(err, attempt + 1, req)),
            }
        };

        self.cache.lock().unwrap().insert(key.clone(), content.clone());
        if let Some(recorder) = &self.recorder {
            recorder.put(&StoredResponse {
                digest: key,
                backend_id: self.backend.id().to_string(),
                model_id: self.backend.model_id().to_string(),
                system: req.system.clone(),
                user: req.user.clone(),
                temperature: req.temperature,
                max_tokens: req.max_tokens,
                seed: req.seed,
                tag: req.tag.clone(),
                content: content.clone(),
            })?;
        }
        Ok(ChatResponse {
            content,
            backend_id: self.backend.id().to_string(),
            model_id: self.backend.model_id().to_string(),
            cached: false,
        })
    }

    fn classify(&self, err: BackendError, attempts: u32, req: &ChatRequest) -> GatewayError {
        match err {
            BackendError::Transport(message) => GatewayError::Transport { attempts, message },
            BackendError::Protocol(message) => GatewayError::Protocol { message },
            BackendError::NotRecorded { digest } => GatewayError::ReplayMiss {
                digest,
                tag: req.tag.clone(),
            },
        }
    }

    /// Complete a batch with at most `max_parallel` calls in flight.
    /// Results align positionally with the requests regardless of timing,
    /// and per-request failures do not abort the rest of the batch.
    pub fn complete_batch(
        &self,
        requests: &[ChatRequest],
    ) -> Vec<Result<ChatResponse, GatewayError>> {
        map_bounded(self.max_parallel, requests, |_, req| self.complete(req))
    }
}

/// Apply `f` to every item on at most `max_parallel` worker threads,
/// returning outputs in item order.
pub fn map_bounded<T, O, F>(max_parallel: usize, items: &[T], f: F) -> Vec<O>
where
    T: Sync,
    O: Send,
    F: Fn(usize, &T) -> O + Sync,
{
    let mut slots: Vec<Option<O>> = (0..items.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slot_cell = Mutex::new(&mut slots);

    std::thread::scope(|scope| {
        for _ in 0..max_parallel.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let out = f(i, &items[i]);
                slot_cell.lock().unwrap()[i] = Some(out);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.expect("every slot is filled before scope exit"))
        .collect()
}
