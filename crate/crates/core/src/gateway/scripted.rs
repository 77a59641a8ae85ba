//! In-memory backend for tests: digest-keyed reply queues, an optional
//! fallback handler, injectable transport failures, and a concurrency probe.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::backend::{BackendError, ChatBackend};
use super::{cache_key, ChatRequest};

type Handler = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Observes how many scripted calls overlap in time.
#[derive(Clone, Default)]
pub struct ParallelismProbe {
    inner: Arc<ProbeInner>,
}

#[derive(Default)]
struct ProbeInner {
    current: AtomicUsize,
    max: AtomicUsize,
}

impl ParallelismProbe {
    fn enter(&self) -> ProbeGuard<'_> {
        let now = self.inner.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.inner.max.fetch_max(now, Ordering::SeqCst);
        ProbeGuard { inner: &self.inner }
    }

    /// Highest number of calls ever in flight at once.
    pub fn max_seen(&self) -> usize {
        self.inner.max.load(Ordering::SeqCst)
    }
}

struct ProbeGuard<'a> {
    inner: &'a ProbeInner,
}

impl Drop for ProbeGuard<'_> {
    fn drop(&mut self) {
        self.inner.current.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Deterministic stand-in for a live model. Replies resolve in order:
/// queued replies for the request digest first, then the fallback handler.
/// Anything else errors, so tests notice unexpected requests.
pub struct ScriptedBackend {
    backend_id: String,
    model_id: String,
    queues: Mutex<HashMap<String, VecDeque<String>>>,
    handler: Option<Handler>,
    delay: Option<Duration>,
    fail_remaining: AtomicU32,
    calls: Arc<AtomicU32>,
    probe: ParallelismProbe,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::with_ids("scripted", "scripted-model")
    }

    pub fn with_ids(backend_id: impl Into<String>, model_id: impl Into<String>) -> Self {
        ScriptedBackend {
            backend_id: backend_id.into(),
            model_id: model_id.into(),
            queues: Mutex::new(HashMap::new()),
            handler: None,
            delay: None,
            fail_remaining: AtomicU32::new(0),
            calls: Arc::new(AtomicU32::new(0)),
            probe: ParallelismProbe::default(),
        }
    }

    /// Fallback invoked when no queued reply matches; `None` means the
    /// handler declines and the request counts as unscripted.
    pub fn with_handler<F>(mut self, handler: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    {
        self.handler = Some(Box::new(handler));
        self
    }

    /// Sleep this long inside every call, making overlap observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    /// Fail the next `n` calls with a transport error before answering.
    pub fn failing_times(self, n: u32) -> Self {
        self.fail_remaining.store(n, Ordering::SeqCst);
        self
    }

    /// Queue a reply for whichever request hashes to `digest`. Repeated
    /// pushes to one digest are consumed in push order.
    pub fn push_reply(&self, digest: &str, content: impl Into<String>) {
        self.queues
            .lock()
            .unwrap()
            .entry(digest.to_string())
            .or_default()
            .push_back(content.into());
    }

    /// Queue a reply for this exact request.
    pub fn reply_to(&self, req: &ChatRequest, content: impl Into<String>) {
        let digest = cache_key(&self.backend_id, &self.model_id, req);
        self.push_reply(&digest, content);
    }

    /// Shared counter of completed `complete` entries (including failures).
    pub fn call_counter(&self) -> Arc<AtomicU32> {
        self.calls.clone()
    }

    pub fn parallelism_probe(&self) -> ParallelismProbe {
        self.probe.clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.backend_id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let _guard = self.probe.enter();
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        if self
            .fail_remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(BackendError::Transport("scripted transport failure".into()));
        }
        let digest = cache_key(&self.backend_id, &self.model_id, req);
        if let Some(content) = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&digest)
            .and_then(|q| q.pop_front())
        {
            return Ok(content);
        }
        if let Some(handler) = &self.handler {
            if let Some(content) = handler(req) {
                return Ok(content);
            }
        }
        Err(BackendError::Protocol(format!(
            "unscripted request digest {digest} (tag: {})",
            req.tag
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queued_replies_take_priority_and_drain_in_order() {
        let backend = ScriptedBackend::new().with_handler(|_| Some("fallback".into()));
        let req = ChatRequest::new("s", "u");
        backend.reply_to(&req, "first");
        backend.reply_to(&req, "second");
        assert_eq!(backend.complete(&req).unwrap(), "first");
        assert_eq!(backend.complete(&req).unwrap(), "second");
        assert_eq!(backend.complete(&req).unwrap(), "fallback");
    }

    #[test]
    fn unscripted_requests_error_with_digest() {
        let backend = ScriptedBackend::new();
        let req = ChatRequest::new("s", "u").with_tag("probe");
        let err = backend.complete(&req).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unscripted"));
        assert!(msg.contains("probe"));
    }
}
