//! DivScore and the realized-token baseline statistics.
//!
//! Every statistic here is a mean over scored positions, computed in
//! natural-log units. Entropy and cross-entropy use the realized-token
//! form: only the probability of the token that actually occurs enters the
//! sum, never the full vocabulary distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{PairedTrace, TokenTrace, TraceError};

/// Cross-entropy at or below this value is treated as degenerate.
pub const EPS_DIV: f64 = 1e-9;

/// Traces shorter than this are scored but tagged `short_text` downstream.
pub const SHORT_TEXT_STEPS: usize = 8;

/// Sums longer than this switch from sequential to pairwise summation.
const PAIRWISE_CUTOFF: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cross-entropy {0:e} is at or below the degeneracy floor")]
    DegenerateCrossEntropy(f64),
    #[error("rank unavailable at step {0} (realized token outside the backend's top-k)")]
    RankUnavailable(usize),
    #[error("unknown scoring mode {0:?}")]
    UnknownMode(String),
    #[error("scoring mode `full_vocab` is not supported; only `realized_token` is implemented")]
    UnsupportedMode,
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("unknown orientation {0:?}")]
    UnknownOrientation(String),
}

/// Which way a detector's scores point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerIsMachine,
    HigherIsMachine,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Self::LowerIsMachine => Self::HigherIsMachine,
            Self::HigherIsMachine => Self::LowerIsMachine,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LowerIsMachine => "lower_is_machine",
            Self::HigherIsMachine => "higher_is_machine",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orientation {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower_is_machine" => Ok(Self::LowerIsMachine),
            "higher_is_machine" => Ok(Self::HigherIsMachine),
            other => Err(ScoreError::UnknownOrientation(other.to_string())),
        }
    }
}

/// Detector methods computable from realized-token traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Divscore,
    Entropy,
    LogLikelihood,
    Rank,
    LogRank,
    PplRatio,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Divscore,
        Method::Entropy,
        Method::LogLikelihood,
        Method::Rank,
        Method::LogRank,
        Method::PplRatio,
    ];

    /// Default orientation of each method.
    ///
    /// Rank and log-rank follow the literal reading (a higher mean rank
    /// flags machine text), which is the reverse of the usual GLTR intuition;
    /// callers can override it per run.
    pub fn orientation(self) -> Orientation {
        match self {
            Method::Divscore | Method::Entropy | Method::PplRatio => Orientation::LowerIsMachine,
            Method::LogLikelihood | Method::Rank | Method::LogRank => Orientation::HigherIsMachine,
        }
    }

    /// Whether the method needs both the general and the adapted trace.
    pub fn is_paired(self) -> bool {
        matches!(self, Method::Divscore | Method::PplRatio)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Divscore => "divscore",
            Method::Entropy => "entropy",
            Method::LogLikelihood => "log_likelihood",
            Method::Rank => "rank",
            Method::LogRank => "log_rank",
            Method::PplRatio => "ppl_ratio",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ScoreError::UnknownMethod(s.to_string()))
    }
}

/// How entropy-style sums are taken. Only the realized-token form exists;
/// `full_vocab` is reserved and rejected when parsed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ScoringMode {
    #[default]
    RealizedToken,
}

impl FromStr for ScoringMode {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realized_token" => Ok(Self::RealizedToken),
            "full_vocab" => Err(ScoreError::UnsupportedMode),
            other => Err(ScoreError::UnknownMode(other.to_string())),
        }
    }
}

/// Entropy and cross-entropy behind a DivScore value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub entropy: f64,
    pub cross_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub method: Method,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Components>,
    pub orientation: Orientation,
}

impl DetectorScore {
    fn plain(method: Method, value: f64) -> Self {
        Self {
            method,
            value,
            components: None,
            orientation: method.orientation(),
        }
    }
}

/// Sum with sequential accumulation for short inputs and pairwise
/// (tree) accumulation beyond [`PAIRWISE_CUTOFF`] terms.
pub fn accumulate(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_CUTOFF {
        values.iter().sum()
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        accumulate(lo) + accumulate(hi)
    }
}

fn mean_of(values: Vec<f64>) -> Result<f64, ScoreError> {
    if values.is_empty() {
        return Err(TraceError::EmptyTrace.into());
    }
    Ok(accumulate(&values) / values.len() as f64)
}

fn checked(trace: &TokenTrace) -> Result<(), ScoreError> {
    trace.validate().map_err(ScoreError::from)
}

/// `-(1/L) Σ p_i ln p_i` over the realized tokens of `trace`.
pub fn mean_token_entropy(trace: &TokenTrace) -> Result<f64, ScoreError> {
    checked(trace)?;
    let h = mean_of(
        trace
            .steps
            .iter()
            .map(|s| -(s.prob() * s.logprob))
            .collect(),
    )?;
    // -p ln p is nonnegative term by term; normalize the sign of zero.
    Ok(h.max(0.0))
}

/// `-(1/L) Σ p_general,i · ln p_adapted,i`.
pub fn mean_token_cross_entropy(pair: &PairedTrace) -> Result<f64, ScoreError> {
    let ce = mean_of(
        pair.general()
            .steps
            .iter()
            .zip(&pair.adapted().steps)
            .map(|(g, a)| -(g.prob() * a.logprob))
            .collect(),
    )?;
    Ok(ce.max(0.0))
}

/// DivScore from already computed components.
pub fn divscore_from_components(
    entropy: f64,
    cross_entropy: f64,
) -> Result<DetectorScore, ScoreError> {
    // NaN is degenerate too
    if cross_entropy.is_nan() || cross_entropy <= EPS_DIV {
        return Err(ScoreError::DegenerateCrossEntropy(cross_entropy));
    }
    Ok(DetectorScore {
        method: Method::Divscore,
        value: entropy / cross_entropy,
        components: Some(Components {
            entropy,
            cross_entropy,
        }),
        orientation: Method::Divscore.orientation(),
    })
}

/// Entropy of the adapted trace normalized by the general/adapted
/// cross-entropy. Low values point to machine-generated text.
pub fn divscore(pair: &PairedTrace) -> Result<DetectorScore, ScoreError> {
    let ce = mean_token_cross_entropy(pair)?;
    let h = mean_token_entropy(pair.adapted())?;
    divscore_from_components(h, ce)
}

/// Mean realized-token entropy wrapped as a detector score.
pub fn baseline_entropy(trace: &TokenTrace) -> Result<DetectorScore, ScoreError> {
    mean_token_entropy(trace).map(|h| DetectorScore::plain(Method::Entropy, h))
}

/// Mean log-probability.
pub fn baseline_log_likelihood(trace: &TokenTrace) -> Result<DetectorScore, ScoreError> {
    checked(trace)?;
    let ll = mean_of(trace.steps.iter().map(|s| s.logprob).collect())?;
    Ok(DetectorScore::plain(Method::LogLikelihood, ll))
}

fn ranks(trace: &TokenTrace) -> Result<Vec<u32>, ScoreError> {
    checked(trace)?;
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| s.rank.ok_or(ScoreError::RankUnavailable(i)))
        .collect()
}

pub fn baseline_rank(trace: &TokenTrace) -> Result<DetectorScore, ScoreError> {
    let r = ranks(trace)?;
    let v = mean_of(r.into_iter().map(f64::from).collect())?;
    Ok(DetectorScore::plain(Method::Rank, v))
}

pub fn baseline_log_rank(trace: &TokenTrace) -> Result<DetectorScore, ScoreError> {
    let r = ranks(trace)?;
    let v = mean_of(r.into_iter().map(|r| f64::from(r).ln()).collect())?;
    Ok(DetectorScore::plain(Method::LogRank, v))
}

/// Log-perplexity of the general trace over the general/adapted
/// cross-entropy; the realized-token analogue of the Binoculars ratio.
pub fn baseline_ppl_ratio(pair: &PairedTrace) -> Result<DetectorScore, ScoreError> {
    let ce = mean_token_cross_entropy(pair)?;
    if ce.is_nan() || ce <= EPS_DIV {
        return Err(ScoreError::DegenerateCrossEntropy(ce));
    }
    let nll = -mean_of(pair.general().steps.iter().map(|s| s.logprob).collect())?;
    Ok(DetectorScore::plain(Method::PplRatio, nll.max(0.0) / ce))
}

/// Scores a single-trace baseline. Paired methods are rejected.
pub fn score_single(
    method: Method,
    trace: &TokenTrace,
) -> Option<Result<DetectorScore, ScoreError>> {
    Some(match method {
        Method::Entropy => baseline_entropy(trace),
        Method::LogLikelihood => baseline_log_likelihood(trace),
        Method::Rank => baseline_rank(trace),
        Method::LogRank => baseline_log_rank(trace),
        Method::Divscore | Method::PplRatio => return None,
    })
}

/// Scores a paired method. Single-trace methods are rejected.
pub fn score_paired(
    method: Method,
    pair: &PairedTrace,
) -> Option<Result<DetectorScore, ScoreError>> {
    Some(match method {
        Method::Divscore => divscore(pair),
        Method::PplRatio => baseline_ppl_ratio(pair),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TokenStep;
    use std::f64::consts::LN_2;

    fn trace_lp(model: &str, lps: &[f64]) -> TokenTrace {
        TokenTrace::new(
            model,
            "h",
            lps.iter()
                .enumerate()
                .map(|(i, &lp)| TokenStep::new(format!("t{i}"), lp, Some(1)))
                .collect(),
        )
        .unwrap()
    }

    fn trace_ranks(ranks: &[u32]) -> TokenTrace {
        TokenTrace::new(
            "m",
            "h",
            ranks
                .iter()
                .enumerate()
                .map(|(i, &r)| TokenStep::new(format!("t{i}"), -1.0, Some(r)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn entropy_constant_cases() {
        let half = trace_lp("a", &[-LN_2; 7]);
        assert!((mean_token_entropy(&half).unwrap() - 0.5 * LN_2).abs() < 1e-15);
        assert!((mean_token_entropy(&half).unwrap() - 0.34657).abs() < 1e-5);
        let det = trace_lp("a", &[0.0; 3]);
        assert_eq!(mean_token_entropy(&det).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_cases() {
        let a = trace_lp("a", &[-0.3, -1.7, -0.01, -4.0]);
        let same = PairedTrace::new(a.clone(), a.clone()).unwrap();
        assert_eq!(
            mean_token_cross_entropy(&same).unwrap(),
            mean_token_entropy(&a).unwrap()
        );
        let g = trace_lp("g", &[0.0; 5]);
        let h = trace_lp("a", &[-LN_2; 5]);
        let ce = mean_token_cross_entropy(&PairedTrace::new(g, h).unwrap()).unwrap();
        assert!((ce - LN_2).abs() < 1e-15);
    }

    #[test]
    fn divscore_golden_components() {
        let d = divscore_from_components(0.753906, 2.734375).unwrap();
        assert!((d.value - 0.275714).abs() < 5e-5);
        assert_eq!(d.orientation, Orientation::LowerIsMachine);
        let d = divscore_from_components(0.435547, 4.218750).unwrap();
        assert!((d.value - 0.103241).abs() < 5e-5);
        let d = divscore_from_components(1.304688, 4.781250).unwrap();
        assert!((d.value - 0.272876).abs() < 5e-5);
    }

    #[test]
    fn divscore_identity_and_degenerate() {
        let a = trace_lp("a", &[-0.2, -0.9, -2.5, -0.05]);
        let d = divscore(&PairedTrace::new(a.clone(), a).unwrap()).unwrap();
        assert!((d.value - 1.0).abs() < 1e-12);
        let c = d.components.unwrap();
        assert!((d.value * c.cross_entropy - c.entropy).abs() <= 1e-9 * c.entropy);

        let det = trace_lp("a", &[0.0; 4]);
        let err = divscore(&PairedTrace::new(det.clone(), det).unwrap()).unwrap_err();
        assert!(matches!(err, ScoreError::DegenerateCrossEntropy(_)));
        assert!(matches!(
            divscore_from_components(0.1, 1e-9),
            Err(ScoreError::DegenerateCrossEntropy(_))
        ));
    }

    #[test]
    fn log_likelihood_cases() {
        let v = baseline_log_likelihood(&trace_lp("a", &[-LN_2; 4])).unwrap();
        assert!((v.value + LN_2).abs() < 1e-15);
        assert_eq!(v.orientation, Orientation::HigherIsMachine);
        assert_eq!(
            baseline_log_likelihood(&trace_lp("a", &[0.0; 4]))
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn rank_cases() {
        assert_eq!(baseline_rank(&trace_ranks(&[1, 1, 1])).unwrap().value, 1.0);
        assert_eq!(
            baseline_rank(&trace_ranks(&[1, 3, 5, 7])).unwrap().value,
            4.0
        );
        assert_eq!(baseline_log_rank(&trace_ranks(&[1, 1])).unwrap().value, 0.0);
        let lr = baseline_log_rank(&trace_ranks(&[1, 2, 4])).unwrap().value;
        assert!((lr - LN_2).abs() < 1e-15);

        let mut t = trace_ranks(&[1, 2, 3]);
        t.steps[1].rank = None;
        assert_eq!(
            baseline_rank(&t).unwrap_err(),
            ScoreError::RankUnavailable(1)
        );
        assert_eq!(
            baseline_log_rank(&t).unwrap_err(),
            ScoreError::RankUnavailable(1)
        );
    }

    #[test]
    fn ppl_ratio_cases() {
        let a = trace_lp("a", &[-LN_2; 6]);
        let v = baseline_ppl_ratio(&PairedTrace::new(a.clone(), a.clone()).unwrap()).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12);
        assert_eq!(v.orientation, Orientation::LowerIsMachine);
        let g = trace_lp("g", &[0.0; 6]);
        let v = baseline_ppl_ratio(&PairedTrace::new(g, a).unwrap()).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn pairwise_accumulation_matches_sequential() {
        let xs: Vec<f64> = (0..5000)
            .map(|i| ((i * 7919) % 1000) as f64 / 997.0)
            .collect();
        let seq: f64 = xs.iter().sum();
        assert!((accumulate(&xs) - seq).abs() <= 1e-12 * seq.abs());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "realized_token".parse::<ScoringMode>().unwrap(),
            ScoringMode::RealizedToken
        );
        assert_eq!(
            "full_vocab".parse::<ScoringMode>().unwrap_err(),
            ScoreError::UnsupportedMode
        );
        assert!("bogus".parse::<ScoringMode>().is_err());
    }

    #[test]
    fn method_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.as_str())
            );
        }
    }
}
