//! The `divkit` command-line pipeline: corpus → traces → scores → reports,
//! plus the Gaussian-model simulator.
//!
//! Every command is a function over plain inputs so the binary is a thin
//! wrapper; see [`run`].

mod cli;
mod config;
mod pipeline;
mod reports;
mod scores;

use thiserror::Error;

pub use cli::{
    run, CalibrateArgs, Cli, Command, EvaluateArgs, ExportRocArgs, GroupAxis, ScoresInput,
    SimulateArgs,
};
pub use config::{BaselineModel, ScoreConfig, Settings, TraceSource};
pub use pipeline::{build_provider, score_corpus, ScorePlan};
pub use reports::{
    calibrate_rows, evaluate_rows, group_members, report_to_json, roc_file_name, CalibrationReport,
};
pub use scores::{flags, parse_scores, read_scores, scores_to_jsonl, to_labeled, ScoreRow};

/// A failed command, classified by exit status.
#[derive(Debug, Error)]
pub enum Failure {
    /// Bad invocation or configuration (exit 1).
    #[error("{0:#}")]
    Config(anyhow::Error),
    /// Unreadable or invalid input data (exit 2).
    #[error("{0:#}")]
    Data(anyhow::Error),
    /// The model endpoint could not be used (exit 3).
    #[error("{0:#}")]
    Transport(anyhow::Error),
}

impl Failure {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Self::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        Self::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) => 2,
            Self::Transport(_) => 3,
        }
    }
}

impl From<divkit::backends::BackendError> for Failure {
    fn from(e: divkit::backends::BackendError) -> Self {
        use divkit::backends::BackendError as B;
        match e {
            B::Transport(_) | B::Protocol(_) | B::Auth(_) => Self::Transport(e.into()),
            B::Config(_) => Self::Config(e.into()),
            B::Storage(_) | B::TokenizerMismatch(_) | B::TraceMissing { .. } | B::EmptyTrace => {
                Self::Data(e.into())
            }
        }
    }
}
