//! Detection of machine-generated text from paired token log-probability
//! traces.
//!
//! The central statistic is DivScore: the mean realized-token entropy of a
//! text under a domain-adapted model, divided by the realized-token
//! cross-entropy between a general model and that adapted model. Low values
//! indicate machine-generated text.
//!
//! - [`scoring`]: DivScore and the baseline statistics (entropy,
//!   log-likelihood, rank, log-rank, perplexity ratio).
//! - [`metrics`]: AUROC, ROC curves, TPR at a fixed FPR, threshold
//!   calibration and grouped evaluation reports.
//! - [`theory`]: the Gaussian performance model (closed-form AUROC, KL
//!   utilities, Monte Carlo validation, monotone-transform checks).
//! - [`backends`]: trace acquisition (OpenAI-compatible echo endpoint,
//!   JSONL replay, content-addressed cache, deterministic stub server).
//! - [`corpus`]: human/machine text collections.

pub mod backends;
pub mod corpus;
pub mod metrics;
pub mod scoring;
pub mod theory;
pub mod trace;

pub use corpus::{Attack, Corpus, CorpusRecord, Label};
pub use metrics::{CalibrationResult, EvalReport, LabeledScore, RocCurve};
pub use scoring::{divscore, DetectorScore, Method, Orientation, ScoreError};
pub use theory::GaussianDetectorModel;
pub use trace::{PairedTrace, TokenStep, TokenTrace, TraceError};
