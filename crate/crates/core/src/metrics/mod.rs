//! ROC analysis over labeled detector scores.
//!
//! All routines work on a "machine-likeness key": the raw score for
//! `higher_is_machine` detectors and its negation for `lower_is_machine`
//! ones. An item is classified machine at threshold `t` when its key is
//! `>= key(t)`, i.e. `score <= t` for `lower_is_machine`. Thresholds are
//! always observed score values or an infinite sentinel that classifies
//! nothing as machine.

mod render;
mod report;
mod roc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Attack, Label};
use crate::scoring::{Method, Orientation};

pub use render::format_g17;
pub use report::{evaluate, roc_to_csv, EvalReport, GroupBy, GroupRow};
pub use roc::{
    allowed_false_positives, auroc, auroc_from_scores, calibrate_threshold, roc_curve, tpr_at_fpr,
    trapezoid_area, CalibrationResult, RocCurve, RocPoint,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(
        "need at least one human and one machine score (got {n_human} human, {n_machine} machine)"
    )]
    DegenerateLabels { n_human: usize, n_machine: usize },
    #[error("scores mix methods or orientations")]
    MixedMethods,
    #[error("non-finite score for {0:?}")]
    NonFiniteScore(String),
    #[error("target FPR {0} must lie strictly between 0 and 1")]
    InvalidTarget(f64),
    #[error("no scores to calibrate on")]
    EmptyInput,
}

/// One detector output with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub doc_id: String,
    pub score: f64,
    pub label: Label,
    pub method: Method,
    pub orientation: Orientation,
    pub domain: String,
    pub source_model: Option<String>,
    pub attack: Attack,
}

/// Maps a score into key space, where larger means more machine-like.
/// `+ 0.0` folds `-0.0` into `+0.0` so the two compare as a tie.
pub(crate) fn to_key(score: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::HigherIsMachine => score + 0.0,
        Orientation::LowerIsMachine => -score + 0.0,
    }
}

pub(crate) fn from_key(key: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::HigherIsMachine => key,
        Orientation::LowerIsMachine => -key,
    }
}

/// Scores partitioned by label, in key space.
pub(crate) struct Split {
    pub orientation: Orientation,
    pub machine: Vec<f64>,
    pub human: Vec<f64>,
}

impl Split {
    pub fn new(scores: &[LabeledScore]) -> Result<Self, MetricsError> {
        let (method, orientation) = match scores.first() {
            Some(s) => (s.method, s.orientation),
            None => {
                return Err(MetricsError::DegenerateLabels {
                    n_human: 0,
                    n_machine: 0,
                })
            }
        };
        let mut machine = Vec::new();
        let mut human = Vec::new();
        for s in scores {
            if s.method != method || s.orientation != orientation {
                return Err(MetricsError::MixedMethods);
            }
            if !s.score.is_finite() {
                return Err(MetricsError::NonFiniteScore(s.doc_id.clone()));
            }
            let k = to_key(s.score, orientation);
            match s.label {
                Label::Machine => machine.push(k),
                Label::Human => human.push(k),
            }
        }
        Self::from_keys(machine, human, orientation)
    }

    pub fn from_keys(
        machine: Vec<f64>,
        human: Vec<f64>,
        orientation: Orientation,
    ) -> Result<Self, MetricsError> {
        if machine.is_empty() || human.is_empty() {
            return Err(MetricsError::DegenerateLabels {
                n_human: human.len(),
                n_machine: machine.len(),
            });
        }
        Ok(Self {
            orientation,
            machine,
            human,
        })
    }
}
