//! Durable record/replay storage for completions.
//!
//! A store is a directory of `{digest}.json` files plus a `meta.json` naming
//! the backend and model that produced them. Replay reuses that identity, so
//! digests computed during replay match the ones computed while recording.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use super::backend::{BackendError, ChatBackend};
use super::{cache_key, ChatRequest, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub backend_id: String,
    pub model_id: String,
}

/// One recorded completion, with enough of the request echoed back to audit
/// what the digest covers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredResponse {
    pub digest: String,
    pub backend_id: String,
    pub model_id: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    pub tag: String,
    pub content: String,
}

pub struct ResponseStore {
    dir: PathBuf,
}

impl ResponseStore {
    /// Open `dir` for recording, creating it and its `meta.json` on first
    /// use. Reusing a directory recorded under a different identity fails.
    pub fn create(dir: &Path, backend_id: &str, model_id: &str) -> Result<Self, GatewayError> {
        fs::create_dir_all(dir).map_err(|e| GatewayError::Store(e.to_string()))?;
        let meta = StoreMeta {
            backend_id: backend_id.to_string(),
            model_id: model_id.to_string(),
        };
        let meta_path = dir.join("meta.json");
        if meta_path.exists() {
            let existing = read_meta(&meta_path)?;
            if existing != meta {
                return Err(GatewayError::Store(format!(
                    "directory {} was recorded by {}/{}, not {}/{}",
                    dir.display(),
                    existing.backend_id,
                    existing.model_id,
                    meta.backend_id,
                    meta.model_id
                )));
            }
        } else {
            let body = serde_json::to_string_pretty(&meta)
                .map_err(|e| GatewayError::Store(e.to_string()))?;
            fs::write(&meta_path, body + "\n").map_err(|e| GatewayError::Store(e.to_string()))?;
        }
        Ok(ResponseStore { dir: dir.to_path_buf() })
    }

    /// Open an existing store and report whose responses it holds.
    pub fn open(dir: &Path) -> Result<(Self, StoreMeta), GatewayError> {
        let meta = read_meta(&dir.join("meta.json"))?;
        Ok((ResponseStore { dir: dir.to_path_buf() }, meta))
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn put(&self, response: &StoredResponse) -> Result<(), GatewayError> {
        let body = serde_json::to_string_pretty(response)
            .map_err(|e| GatewayError::Store(e.to_string()))?;
        fs::write(self.path_for(&response.digest), body + "\n")
            .map_err(|e| GatewayError::Store(e.to_string()))
    }

    pub fn get(&self, digest: &str) -> Result<Option<StoredResponse>, GatewayError> {
        let path = self.path_for(digest);
        if !path.exists() {
            return Ok(None);
        }
        let body = fs::read_to_string(&path).map_err(|e| GatewayError::Store(e.to_string()))?;
        let response: StoredResponse = serde_json::from_str(&body).map_err(|e| {
            GatewayError::Store(format!("corrupt record {}: {e}", path.display()))
        })?;
        Ok(Some(response))
    }
}

fn read_meta(path: &Path) -> Result<StoreMeta, GatewayError> {
    let body = fs::read_to_string(path).map_err(|e| {
        GatewayError::Store(format!("cannot read {}: {e}", path.display()))
    })?;
    serde_json::from_str(&body)
        .map_err(|e| GatewayError::Store(format!("corrupt meta {}: {e}", path.display())))
}

/// Backend that answers only from a recorded store.
pub struct ReplayBackend {
    store: ResponseStore,
    meta: StoreMeta,
}

impl ReplayBackend {
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        let (store, meta) = ResponseStore::open(dir)?;
        Ok(ReplayBackend { store, meta })
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        &self.meta.backend_id
    }

    fn model_id(&self) -> &str {
        &self.meta.model_id
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let digest = cache_key(&self.meta.backend_id, &self.meta.model_id, req);
        match self.store.get(&digest) {
            Ok(Some(record)) => Ok(record.content),
            Ok(None) => Err(BackendError::NotRecorded { digest }),
            Err(e) => Err(BackendError::Protocol(e.to_string())),
        }
    }
}
