use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{BackendError, TraceRecord};

/// Environment variable overriding the cache location.
pub const CACHE_DIR_ENV: &str = "DIVKIT_CACHE_DIR";

/// Content-addressed store of trace records, one JSON file per
/// (text_hash, model_id, backend_params_hash) key.
#[derive(Debug, Clone)]
pub struct TraceCache {
    root: PathBuf,
}

impl TraceCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Uses `$DIVKIT_CACHE_DIR` when set, `fallback` otherwise.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(fallback),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn key(text_hash: &str, model_id: &str, params_hash: &str) -> String {
        let mut h = Sha256::new();
        for part in [text_hash, model_id, params_hash] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(
        &self,
        text_hash: &str,
        model_id: &str,
        params_hash: &str,
    ) -> Result<Option<TraceRecord>, BackendError> {
        let path = self.path_for(&Self::key(text_hash, model_id, params_hash));
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(storage(&path, e)),
        };
        let record: TraceRecord = serde_json::from_str(&raw)
            .map_err(|e| BackendError::Storage(format!("{}: {e}", path.display())))?;
        let matches = record.text_hash == text_hash
            && record.model_id == model_id
            && record.backend_params_hash == params_hash;
        Ok(matches.then_some(record))
    }

    /// Stores `record` atomically; an existing entry for the key is replaced.
    pub fn put(&self, record: &TraceRecord) -> Result<PathBuf, BackendError> {
        let key = Self::key(
            &record.text_hash,
            &record.model_id,
            &record.backend_params_hash,
        );
        let path = self.path_for(&key);
        let dir = path.parent().expect("cache paths have a parent");
        fs::create_dir_all(dir).map_err(|e| storage(dir, e))?;
        let body =
            serde_json::to_string(record).map_err(|e| BackendError::Storage(e.to_string()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| storage(dir, e))?;
        tmp.write_all(body.as_bytes())
            .map_err(|e| storage(dir, e))?;
        tmp.persist(&path).map_err(|e| storage(&path, e.error))?;
        Ok(path)
    }
}

fn storage(path: &Path, e: std::io::Error) -> BackendError {
    BackendError::Storage(format!("{}: {e}", path.display()))
}
