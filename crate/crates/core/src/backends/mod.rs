//! Trace acquisition: live fetch from an OpenAI-compatible completions
//! endpoint, deterministic replay from recorded JSONL, and a
//! content-addressed cache between the two.

mod cache;
mod openai;
mod replay;
pub mod stub;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::trace::{PairedTrace, TokenStep, TokenTrace, TraceError};

pub use cache::{TraceCache, CACHE_DIR_ENV};
pub use openai::{fetch_trace, parse_completion};
pub use replay::{parse_replay, replay_load, replay_save, to_jsonl, ReplayError};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("general and adapted models tokenize the text differently: {0}")]
    TokenizerMismatch(TraceError),
    #[error("text yields no scored tokens")]
    EmptyTrace,
    #[error("no recorded trace for text {text_hash} under model {model_id:?}")]
    TraceMissing { text_hash: String, model_id: String },
    #[error("storage error: {0}")]
    Storage(String),
    #[error("invalid backend config: {0}")]
    Config(String),
}

/// Lowercase hex SHA-256 of the UTF-8 bytes of `text`.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub(crate) fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Connection settings for one model behind an OpenAI-compatible server.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub top_k_logprobs: u8,
    pub request_timeout: Duration,
    pub max_parallel_requests: usize,
    /// Name of the environment variable holding the bearer token, if any.
    pub auth_token_env: Option<String>,
}

impl BackendConfig {
    pub const DEFAULT_TOP_K: u8 = 5;

    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            top_k_logprobs: Self::DEFAULT_TOP_K,
            request_timeout: Duration::from_secs(60),
            max_parallel_requests: 4,
            auth_token_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let uri: ureq::http::Uri = self.endpoint_url.parse().map_err(|e| {
            BackendError::Config(format!("endpoint_url {:?}: {e}", self.endpoint_url))
        })?;
        if !matches!(uri.scheme_str(), Some("http" | "https")) || uri.host().is_none() {
            return Err(BackendError::Config(format!(
                "endpoint_url {:?} must be an absolute http(s) URL",
                self.endpoint_url
            )));
        }
        if self.model_name.is_empty() {
            return Err(BackendError::Config("model_name must be nonempty".into()));
        }
        if self.top_k_logprobs > 20 {
            return Err(BackendError::Config(
                "top_k_logprobs must be within 0..=20".into(),
            ));
        }
        if self.max_parallel_requests == 0 {
            return Err(BackendError::Config(
                "max_parallel_requests must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn completions_url(&self) -> String {
        format!("{}/v1/completions", self.endpoint_url.trim_end_matches('/'))
    }

    /// Hash of the parameters that determine a trace's content. Credentials,
    /// timeouts and parallelism are excluded.
    pub fn params_hash(&self) -> String {
        let canonical = format!(
            "openai-completions-echo/1\nendpoint={}\nmodel={}\ntop_k={}\n",
            self.endpoint_url.trim_end_matches('/'),
            self.model_name,
            self.top_k_logprobs
        );
        text_hash(&canonical)
    }
}

/// A trace with the provenance needed to store and look it up.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub text_hash: String,
    pub model_id: String,
    pub backend_params_hash: String,
    pub created_at: String,
    pub trace: TokenTrace,
}

#[derive(Serialize, Deserialize)]
struct TraceRecordWire {
    text_hash: String,
    model_id: String,
    backend_params_hash: String,
    created_at: String,
    steps: Vec<TokenStep>,
}

impl Serialize for TraceRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TraceRecordWire {
            text_hash: self.text_hash.clone(),
            model_id: self.model_id.clone(),
            backend_params_hash: self.backend_params_hash.clone(),
            created_at: self.created_at.clone(),
            steps: self.trace.steps.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TraceRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = TraceRecordWire::deserialize(d)?;
        Ok(TraceRecord {
            trace: TokenTrace {
                model_id: w.model_id.clone(),
                text_hash: w.text_hash.clone(),
                steps: w.steps,
            },
            text_hash: w.text_hash,
            model_id: w.model_id,
            backend_params_hash: w.backend_params_hash,
            created_at: w.created_at,
        })
    }
}

impl TraceRecord {
    pub fn new(trace: TokenTrace, backend_params_hash: impl Into<String>) -> Self {
        Self {
            text_hash: trace.text_hash.clone(),
            model_id: trace.model_id.clone(),
            backend_params_hash: backend_params_hash.into(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            trace,
        }
    }
}

/// Fetches both traces of `text` and checks they share a tokenization.
pub fn fetch_paired(
    text: &str,
    general: &BackendConfig,
    adapted: &BackendConfig,
) -> Result<PairedTrace, BackendError> {
    let g = fetch_trace(text, general)?;
    let a = fetch_trace(text, adapted)?;
    pair_traces(g, a)
}

pub fn pair_traces(general: TokenTrace, adapted: TokenTrace) -> Result<PairedTrace, BackendError> {
    PairedTrace::new(general, adapted).map_err(|e| match e {
        TraceError::LengthMismatch { .. } | TraceError::TokenMismatch { .. } => {
            BackendError::TokenizerMismatch(e)
        }
        other => BackendError::Protocol(other.to_string()),
    })
}

/// Something that yields the trace of a text under one model.
pub trait TraceProvider: Sync {
    fn model_id(&self) -> &str;
    fn trace(&self, text: &str) -> Result<TokenTrace, BackendError>;
    /// Upper bound on concurrent calls to [`TraceProvider::trace`].
    fn max_parallel(&self) -> usize;
}

/// Live endpoint with an optional read-through cache.
pub struct LiveProvider {
    cfg: BackendConfig,
    cache: Option<TraceCache>,
}

impl LiveProvider {
    pub fn new(cfg: BackendConfig, cache: Option<TraceCache>) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(Self { cfg, cache })
    }
}

impl TraceProvider for LiveProvider {
    fn model_id(&self) -> &str {
        &self.cfg.model_name
    }

    fn trace(&self, text: &str) -> Result<TokenTrace, BackendError> {
        let params = self.cfg.params_hash();
        let hash = text_hash(text);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&hash, &self.cfg.model_name, &params)? {
                return Ok(hit.trace);
            }
        }
        let trace = fetch_trace(text, &self.cfg)?;
        if let Some(cache) = &self.cache {
            cache.put(&TraceRecord::new(trace.clone(), params))?;
        }
        Ok(trace)
    }

    fn max_parallel(&self) -> usize {
        self.cfg.max_parallel_requests
    }
}

/// Recorded traces of one model, looked up by text hash.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    model_id: String,
    by_hash: HashMap<String, TokenTrace>,
}

impl ReplayProvider {
    /// Keeps the records of `model_id`; later duplicates of a text win.
    pub fn new(model_id: impl Into<String>, records: Vec<TraceRecord>) -> Self {
        let model_id = model_id.into();
        let by_hash = records
            .into_iter()
            .filter(|r| r.model_id == model_id)
            .map(|r| (r.text_hash, r.trace))
            .collect();
        Self { model_id, by_hash }
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }
}

impl TraceProvider for ReplayProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn trace(&self, text: &str) -> Result<TokenTrace, BackendError> {
        let hash = text_hash(text);
        self.by_hash
            .get(&hash)
            .cloned()
            .ok_or_else(|| BackendError::TraceMissing {
                text_hash: hash,
                model_id: self.model_id.clone(),
            })
    }

    fn max_parallel(&self) -> usize {
        1
    }
}

/// Maps `f` over `items` with at most `workers` concurrent calls, returning
/// results in input order.
pub fn bounded_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_hash_is_sha256_hex() {
        assert_eq!(
            text_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(is_sha256_hex(&text_hash("")));
        assert!(!is_sha256_hex("ABC"));
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig::new("http://127.0.0.1:8000", "m")
            .validate()
            .is_ok());
        assert!(BackendConfig::new("not a url", "m").validate().is_err());
        assert!(BackendConfig::new("ftp://host", "m").validate().is_err());
        let mut c = BackendConfig::new("http://h", "m");
        c.max_parallel_requests = 0;
        assert!(c.validate().is_err());
        c.max_parallel_requests = 1;
        c.top_k_logprobs = 21;
        assert!(c.validate().is_err());
    }

    #[test]
    fn params_hash_ignores_credentials_and_trailing_slash() {
        let a = BackendConfig::new("http://h:1/", "m");
        let mut b = BackendConfig::new("http://h:1", "m");
        b.auth_token_env = Some("TOKEN".into());
        b.max_parallel_requests = 9;
        assert_eq!(a.params_hash(), b.params_hash());
        b.top_k_logprobs = 3;
        assert_ne!(a.params_hash(), b.params_hash());
    }

    #[test]
    fn bounded_map_keeps_order() {
        let xs: Vec<u64> = (0..100).collect();
        let ys = bounded_map(&xs, 7, |x| x * x);
        assert_eq!(ys, xs.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!(bounded_map(&Vec::<u64>::new(), 3, |x| *x).is_empty());
    }
}
