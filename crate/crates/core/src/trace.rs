//! Per-token log-probability traces.
//!
//! A [`TokenTrace`] is the realized-token view of one text under one model:
//! for every scored position we keep the surface token, the natural-log
//! probability the model assigned to it, and (when the backend exposed
//! enough alternatives) its rank among the model's candidates.
//!
//! Backends frequently return no log-probability for the first position of
//! an echoed prompt. Such positions are never stored; `L` counts only the
//! scored steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when a trace or trace pair violates its invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace has no scored steps")]
    EmptyTrace,
    #[error("step {index}: logprob {value} is not a finite value <= 0")]
    InvalidLogprob { index: usize, value: f64 },
    #[error("step {index}: rank must be >= 1")]
    InvalidRank { index: usize },
    #[error("paired traces differ in length ({general} vs {adapted})")]
    LengthMismatch { general: usize, adapted: usize },
    #[error("paired traces disagree on token {index}: {general:?} vs {adapted:?}")]
    TokenMismatch {
        index: usize,
        general: String,
        adapted: String,
    },
}

/// One scored position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStep {
    #[serde(rename = "t")]
    pub token_text: String,
    /// Natural-log probability of the realized token, always `<= 0`.
    #[serde(rename = "lp")]
    pub logprob: f64,
    /// 1-based rank of the realized token; `None` when the backend's top-k
    /// list did not contain it.
    #[serde(rename = "r")]
    pub rank: Option<u32>,
}

impl TokenStep {
    pub fn new(token_text: impl Into<String>, logprob: f64, rank: Option<u32>) -> Self {
        Self {
            token_text: token_text.into(),
            logprob,
            rank,
        }
    }

    /// Realized-token probability `exp(logprob)`.
    pub fn prob(&self) -> f64 {
        self.logprob.exp()
    }

    fn check(&self, index: usize) -> Result<(), TraceError> {
        if !(self.logprob.is_finite() && self.logprob <= 0.0) {
            return Err(TraceError::InvalidLogprob {
                index,
                value: self.logprob,
            });
        }
        if self.rank == Some(0) {
            return Err(TraceError::InvalidRank { index });
        }
        Ok(())
    }
}

/// Ordered realized-token record of one text under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub model_id: String,
    pub text_hash: String,
    pub steps: Vec<TokenStep>,
}

impl TokenTrace {
    /// Builds a trace and checks every step invariant.
    pub fn new(
        model_id: impl Into<String>,
        text_hash: impl Into<String>,
        steps: Vec<TokenStep>,
    ) -> Result<Self, TraceError> {
        let trace = Self {
            model_id: model_id.into(),
            text_hash: text_hash.into(),
            steps,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.steps.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        self.steps
            .iter()
            .enumerate()
            .try_for_each(|(i, s)| s.check(i))
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.token_text.as_str())
    }
}

/// The same token sequence scored by a general model and its
/// domain-adapted counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTrace {
    general: TokenTrace,
    adapted: TokenTrace,
}

impl PairedTrace {
    /// Pairs two traces, requiring identical length and identical token
    /// text at every position.
    pub fn new(general: TokenTrace, adapted: TokenTrace) -> Result<Self, TraceError> {
        general.validate()?;
        adapted.validate()?;
        if general.len() != adapted.len() {
            return Err(TraceError::LengthMismatch {
                general: general.len(),
                adapted: adapted.len(),
            });
        }
        if let Some((index, (g, a))) = general
            .steps
            .iter()
            .zip(&adapted.steps)
            .enumerate()
            .find(|(_, (g, a))| g.token_text != a.token_text)
        {
            return Err(TraceError::TokenMismatch {
                index,
                general: g.token_text.clone(),
                adapted: a.token_text.clone(),
            });
        }
        Ok(Self { general, adapted })
    }

    pub fn general(&self) -> &TokenTrace {
        &self.general
    }

    pub fn adapted(&self) -> &TokenTrace {
        &self.adapted
    }

    pub fn len(&self) -> usize {
        self.adapted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adapted.is_empty()
    }

    pub fn into_parts(self) -> (TokenTrace, TokenTrace) {
        (self.general, self.adapted)
    }
}
