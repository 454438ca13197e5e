//! A deterministic, in-process stand-in for an OpenAI-compatible
//! completions server. It answers `POST /v1/completions` with echoed
//! per-token logprobs so the live backend path can be exercised without a
//! model.
//!
//! Responses come from per-model scripts (exact payloads for known prompts)
//! or, for unscripted prompts, from a hash-seeded generator: the prompt is
//! split into whitespace-led words (or single characters), the first token
//! gets a `null` logprob, and every later token a logprob and rank derived
//! from SHA-256 of `(seed, position, token)`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// How a stub model splits prompts into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubTokenizer {
    /// Each token is a run of whitespace followed by a run of non-whitespace.
    Words,
    /// Each token is a single character.
    Chars,
}

/// One scripted response position.
#[derive(Debug, Clone, PartialEq)]
pub struct StubToken {
    pub text: String,
    pub logprob: Option<f64>,
    pub top: Vec<(String, f64)>,
}

impl StubToken {
    pub fn new(text: &str, logprob: Option<f64>, top: &[(&str, f64)]) -> Self {
        Self {
            text: text.to_string(),
            logprob,
            top: top.iter().map(|(t, v)| (t.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StubModel {
    tokenizer: StubTokenizer,
    seed: u64,
    scripts: HashMap<String, Vec<StubToken>>,
    omit_logprobs: bool,
}

impl StubModel {
    pub fn new(seed: u64) -> Self {
        Self {
            tokenizer: StubTokenizer::Words,
            seed,
            scripts: HashMap::new(),
            omit_logprobs: false,
        }
    }

    pub fn tokenizer(mut self, tokenizer: StubTokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    /// Fixed response for an exact prompt.
    pub fn script(mut self, prompt: &str, tokens: Vec<StubToken>) -> Self {
        self.scripts.insert(prompt.to_string(), tokens);
        self
    }

    /// Answer without the `logprobs` object (a non-conforming server).
    pub fn without_logprobs(mut self) -> Self {
        self.omit_logprobs = true;
        self
    }

    fn tokenize(&self, prompt: &str) -> Vec<String> {
        match self.tokenizer {
            StubTokenizer::Chars => prompt.chars().map(String::from).collect(),
            StubTokenizer::Words => {
                let mut out: Vec<String> = Vec::new();
                let mut cur = String::new();
                let mut in_word = false;
                for c in prompt.chars() {
                    if c.is_whitespace() && in_word {
                        out.push(std::mem::take(&mut cur));
                        in_word = false;
                    }
                    if !c.is_whitespace() {
                        in_word = true;
                    }
                    cur.push(c);
                }
                if !cur.is_empty() {
                    out.push(cur);
                }
                out
            }
        }
    }

    /// Deterministic positions for an unscripted prompt.
    pub fn generate(&self, prompt: &str) -> Vec<StubToken> {
        self.tokenize(prompt)
            .into_iter()
            .enumerate()
            .map(|(i, tok)| {
                if i == 0 {
                    return StubToken {
                        text: tok,
                        logprob: None,
                        top: Vec::new(),
                    };
                }
                let mut h = Sha256::new();
                h.update(self.seed.to_le_bytes());
                h.update((i as u64).to_le_bytes());
                h.update(tok.as_bytes());
                let d = h.finalize();
                let u = u64::from_le_bytes(d[..8].try_into().unwrap()) as f64 / u64::MAX as f64;
                let rank = 1 + (d[8] % 4) as usize;
                let lp = -(0.05 + 4.0 * u);
                // rank-1 better alternatives between lp and 0, then worse ones
                let mut top: Vec<(String, f64)> = (1..rank)
                    .map(|j| (format!("<alt{j}>"), lp * j as f64 / rank as f64))
                    .collect();
                top.push((tok.clone(), lp));
                top.extend((rank..rank + 20).map(|j| (format!("<alt{j}>"), lp - 0.5 * j as f64)));
                StubToken {
                    text: tok,
                    logprob: Some(lp),
                    top,
                }
            })
            .collect()
    }

    fn respond(&self, prompt: &str, top_k: usize) -> Value {
        let positions = self
            .scripts
            .get(prompt)
            .cloned()
            .unwrap_or_else(|| self.generate(prompt));
        let mut offset = 0;
        let mut tokens = Vec::new();
        let mut token_logprobs = Vec::new();
        let mut top_logprobs = Vec::new();
        let mut text_offset = Vec::new();
        for p in &positions {
            tokens.push(Value::from(p.text.clone()));
            token_logprobs.push(p.logprob.map_or(Value::Null, Value::from));
            text_offset.push(Value::from(offset));
            offset += p.text.len();
            if p.logprob.is_none() {
                top_logprobs.push(Value::Null);
                continue;
            }
            let mut alts = p.top.clone();
            alts.sort_by(|a, b| b.1.total_cmp(&a.1));
            let map: Map<String, Value> = alts
                .into_iter()
                .take(top_k)
                .map(|(t, v)| (t, Value::from(v)))
                .collect();
            top_logprobs.push(Value::Object(map));
        }
        let mut choice = json!({"index": 0, "text": prompt, "finish_reason": "length"});
        if !self.omit_logprobs {
            choice["logprobs"] = json!({
                "tokens": tokens,
                "token_logprobs": token_logprobs,
                "top_logprobs": top_logprobs,
                "text_offset": text_offset,
            });
        }
        json!({"id": "stub-cmpl", "object": "text_completion", "choices": [choice]})
    }
}

/// Counters observable by tests.
#[derive(Debug, Default)]
pub struct StubStats {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl StubStats {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Default)]
pub struct StubServerBuilder {
    models: HashMap<String, StubModel>,
    bearer: Option<String>,
    delay: Duration,
}

impl StubServerBuilder {
    pub fn model(mut self, name: &str, model: StubModel) -> Self {
        self.models.insert(name.to_string(), model);
        self
    }

    /// Reject requests lacking `Authorization: Bearer <token>` with 401.
    pub fn require_bearer(mut self, token: &str) -> Self {
        self.bearer = Some(token.to_string());
        self
    }

    /// Sleep this long before answering each request.
    pub fn delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn start(self) -> std::io::Result<StubServer> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stats = Arc::new(StubStats::default());
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::new(self);
        let handle = {
            let stats = Arc::clone(&stats);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let cfg = Arc::clone(&shared);
                    let stats = Arc::clone(&stats);
                    std::thread::spawn(move || {
                        let _ = serve(conn, &cfg, &stats);
                    });
                }
            })
        };
        Ok(StubServer {
            addr,
            stats,
            stop,
            handle: Some(handle),
        })
    }
}

/// Running stub; shuts down when dropped.
#[derive(Debug)]
pub struct StubServer {
    addr: SocketAddr,
    stats: Arc<StubStats>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn builder() -> StubServerBuilder {
        StubServerBuilder::default()
    }

    /// Base URL suitable for `BackendConfig::endpoint_url`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &StubStats {
        &self.stats
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(conn: TcpStream, cfg: &StubServerBuilder, stats: &StubStats) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut headers: HashMap<String, String> = HashMap::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers
        .get("content-length")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;

    stats.requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if !cfg.delay.is_zero() {
        std::thread::sleep(cfg.delay);
    }
    let (status, payload) = route(&request_line, &headers, &body, cfg);
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);

    let body = payload.to_string();
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        _ => "Not Found",
    };
    let mut conn = conn;
    write!(
        conn,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    conn.flush()
}

fn route(
    request_line: &str,
    headers: &HashMap<String, String>,
    body: &[u8],
    cfg: &StubServerBuilder,
) -> (u16, Value) {
    let err = |code: u16, msg: &str| (code, json!({"error": {"message": msg}}));
    let mut parts = request_line.split_whitespace();
    if parts.next() != Some("POST") || parts.next() != Some("/v1/completions") {
        return err(404, "only POST /v1/completions is served");
    }
    if let Some(token) = &cfg.bearer {
        let expected = format!("Bearer {token}");
        if headers.get("authorization") != Some(&expected) {
            return err(401, "invalid credentials");
        }
    }
    let Ok(req) = serde_json::from_slice::<Value>(body) else {
        return err(400, "body is not JSON");
    };
    let (Some(model), Some(prompt)) = (req["model"].as_str(), req["prompt"].as_str()) else {
        return err(400, "model and prompt are required");
    };
    if req["echo"] != Value::Bool(true) || req["max_tokens"] != json!(0) {
        return err(400, "stub only supports echo=true, max_tokens=0");
    }
    let top_k = req["logprobs"].as_u64().unwrap_or(0) as usize;
    match cfg.models.get(model) {
        Some(m) => (200, m.respond(prompt, top_k)),
        None => err(404, "unknown model"),
    }
}
