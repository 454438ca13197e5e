use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{text_hash, BackendConfig, BackendError};
use crate::trace::{TokenStep, TokenTrace};

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    echo: bool,
    logprobs: u8,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    logprobs: Option<Logprobs>,
}

#[derive(Debug, Deserialize)]
struct Logprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

/// Fetches the echoed realized-token trace of `text`.
///
/// Positions without a logprob (normally the first) are dropped. A step's
/// rank is known only when the realized token appears in the returned
/// top-k alternatives.
pub fn fetch_trace(text: &str, cfg: &BackendConfig) -> Result<TokenTrace, BackendError> {
    if text.is_empty() {
        return Err(BackendError::Protocol("cannot score empty text".into()));
    }
    cfg.validate()?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.request_timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut req = agent.post(&cfg.completions_url());
    if let Some(var) = &cfg.auth_token_env {
        let token = std::env::var(var)
            .map_err(|_| BackendError::Auth(format!("environment variable {var} is not set")))?;
        req = req.header("Authorization", &format!("Bearer {token}"));
    }
    let body = CompletionRequest {
        model: &cfg.model_name,
        prompt: text,
        max_tokens: 0,
        echo: true,
        logprobs: cfg.top_k_logprobs,
    };
    let mut resp = req.send_json(&body).map_err(transport)?;
    let status = resp.status().as_u16();
    if status == 401 || status == 403 {
        return Err(BackendError::Auth(format!(
            "endpoint answered HTTP {status}"
        )));
    }
    if !(200..300).contains(&status) {
        let detail = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(BackendError::Protocol(format!("HTTP {status}: {detail}")));
    }
    let raw = resp.body_mut().read_to_string().map_err(transport)?;
    parse_completion(&raw, &cfg.model_name, &text_hash(text))
}

fn transport(e: ureq::Error) -> BackendError {
    BackendError::Transport(e.to_string())
}

/// Converts a completions response body into a trace.
pub fn parse_completion(
    raw: &str,
    model_id: &str,
    text_hash: &str,
) -> Result<TokenTrace, BackendError> {
    let resp: CompletionResponse = serde_json::from_str(raw)
        .map_err(|e| BackendError::Protocol(format!("malformed response: {e}")))?;
    let lp = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?
        .logprobs
        .ok_or_else(|| BackendError::Protocol("response lacks logprobs".into()))?;
    if lp.tokens.len() != lp.token_logprobs.len() {
        return Err(BackendError::Protocol(format!(
            "{} tokens but {} token_logprobs",
            lp.tokens.len(),
            lp.token_logprobs.len()
        )));
    }
    let tops = lp.top_logprobs.unwrap_or_default();
    let mut steps = Vec::with_capacity(lp.tokens.len());
    for (i, (token, logprob)) in lp.tokens.into_iter().zip(lp.token_logprobs).enumerate() {
        let Some(logprob) = logprob else { continue };
        if !(logprob.is_finite() && logprob <= 0.0) {
            return Err(BackendError::Protocol(format!(
                "position {i}: invalid logprob {logprob}"
            )));
        }
        let rank = tops.get(i).and_then(Option::as_ref).and_then(|alts| {
            let own = *alts.get(&token)?;
            Some(1 + alts.values().filter(|&&v| v > own).count() as u32)
        });
        steps.push(TokenStep::new(token, logprob, rank));
    }
    if steps.is_empty() {
        return Err(BackendError::EmptyTrace);
    }
    TokenTrace::new(model_id, text_hash, steps).map_err(|e| BackendError::Protocol(e.to_string()))
}
