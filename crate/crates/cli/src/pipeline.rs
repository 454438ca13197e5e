use std::collections::BTreeMap;

use anyhow::Context as _;
use divkit::backends::{
    bounded_map, pair_traces, replay_load, BackendError, LiveProvider, ReplayProvider, TraceCache,
    TraceProvider,
};
use divkit::scoring::{score_paired, score_single, SHORT_TEXT_STEPS};
use divkit::{
    Corpus, CorpusRecord, DetectorScore, Method, Orientation, PairedTrace, ScoreError, TokenTrace,
};

use crate::config::{BaselineModel, TraceSource};
use crate::scores::{flags, ScoreRow};
use crate::Failure;

/// What to compute for every record.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePlan {
    pub methods: Vec<Method>,
    pub baseline_model: BaselineModel,
    pub orientation_overrides: BTreeMap<Method, Orientation>,
}

impl ScorePlan {
    fn needs_general(&self) -> bool {
        self.methods
            .iter()
            .any(|m| m.is_paired() || self.baseline_model == BaselineModel::General)
    }

    fn needs_adapted(&self) -> bool {
        self.methods
            .iter()
            .any(|m| m.is_paired() || self.baseline_model == BaselineModel::Adapted)
    }
}

pub fn build_provider(
    source: &TraceSource,
    cache: Option<&TraceCache>,
) -> Result<Box<dyn TraceProvider>, Failure> {
    match source {
        TraceSource::Replay { path, model_id } => {
            let records = replay_load(path)
                .with_context(|| format!("loading replay traces {}", path.display()))
                .map_err(Failure::Data)?;
            let provider = ReplayProvider::new(model_id.clone(), records);
            if provider.is_empty() {
                log::warn!("{} holds no traces for model {model_id:?}", path.display());
            }
            Ok(Box::new(provider))
        }
        TraceSource::Live(cfg) => Ok(Box::new(LiveProvider::new(cfg.clone(), cache.cloned())?)),
    }
}

/// Scores every record under every planned method, in corpus order.
///
/// Per-record problems (missing or misaligned traces, degenerate
/// cross-entropy, unknown ranks) become flagged rows with a null value;
/// endpoint and storage failures abort the run.
pub fn score_corpus(
    corpus: &Corpus,
    plan: &ScorePlan,
    general: Option<&dyn TraceProvider>,
    adapted: Option<&dyn TraceProvider>,
) -> Result<Vec<ScoreRow>, BackendError> {
    let workers = [general, adapted]
        .into_iter()
        .flatten()
        .map(|p| p.max_parallel())
        .min()
        .unwrap_or(1);
    let per_record = bounded_map(corpus.records(), workers, |rec| {
        score_record(rec, plan, general, adapted)
    });
    let mut rows = Vec::with_capacity(corpus.len() * plan.methods.len());
    for r in per_record {
        rows.extend(r?);
    }
    Ok(rows)
}

type Fetched = Result<TokenTrace, &'static str>;

fn fetch(provider: Option<&dyn TraceProvider>, text: &str) -> Result<Fetched, BackendError> {
    let provider = provider.expect("plan validated against configured backends");
    match provider.trace(text) {
        Ok(t) => Ok(Ok(t)),
        Err(BackendError::TraceMissing { .. }) => Ok(Err(flags::TRACE_MISSING)),
        Err(BackendError::EmptyTrace) => Ok(Err(flags::EMPTY_TRACE)),
        Err(e) => Err(e),
    }
}

fn score_record(
    rec: &CorpusRecord,
    plan: &ScorePlan,
    general: Option<&dyn TraceProvider>,
    adapted: Option<&dyn TraceProvider>,
) -> Result<Vec<ScoreRow>, BackendError> {
    let g = if plan.needs_general() {
        Some(fetch(general, &rec.text)?)
    } else {
        None
    };
    let a = if plan.needs_adapted() {
        Some(fetch(adapted, &rec.text)?)
    } else {
        None
    };

    let pair: Option<Result<PairedTrace, &'static str>> =
        if plan.methods.iter().any(|m| m.is_paired()) {
            Some(
                match (
                    g.as_ref().expect("general fetched"),
                    a.as_ref().expect("adapted fetched"),
                ) {
                    (Ok(g), Ok(a)) => match pair_traces(g.clone(), a.clone()) {
                        Ok(p) => Ok(p),
                        Err(BackendError::TokenizerMismatch(_)) => Err(flags::TOKENIZER_MISMATCH),
                        Err(e) => return Err(e),
                    },
                    (Err(f), _) | (_, Err(f)) => Err(*f),
                },
            )
        } else {
            None
        };
    let single = match plan.baseline_model {
        BaselineModel::Adapted => a.as_ref(),
        BaselineModel::General => g.as_ref(),
    };

    let mut rows = Vec::with_capacity(plan.methods.len());
    for &method in &plan.methods {
        let (outcome, steps): (Result<DetectorScore, &'static str>, Option<usize>) =
            if method.is_paired() {
                match pair.as_ref().expect("pair built for paired methods") {
                    Ok(p) => (
                        score_paired(method, p)
                            .expect("paired method")
                            .map_err(score_flag),
                        Some(p.adapted().len()),
                    ),
                    Err(f) => (Err(*f), None),
                }
            } else {
                match single.expect("baseline trace fetched") {
                    Ok(t) => (
                        score_single(method, t)
                            .expect("single-trace method")
                            .map_err(score_flag),
                        Some(t.len()),
                    ),
                    Err(f) => (Err(*f), None),
                }
            };
        let mut row_flags = Vec::new();
        if steps.is_some_and(|n| n < SHORT_TEXT_STEPS) {
            row_flags.push(flags::SHORT_TEXT.to_string());
        }
        let value = match outcome {
            Ok(s) => Some(s.value),
            Err(f) => {
                log::warn!("{}: {method} not scored ({f})", rec.id);
                row_flags.push(f.to_string());
                None
            }
        };
        rows.push(ScoreRow {
            doc_id: rec.id.clone(),
            pair_id: rec.pair_id.clone(),
            method,
            value,
            orientation: plan
                .orientation_overrides
                .get(&method)
                .copied()
                .unwrap_or_else(|| method.orientation()),
            label: rec.label,
            domain: rec.domain.clone(),
            dataset: rec.dataset.clone(),
            source_model: rec.source_model.clone(),
            attack: rec.attack,
            flags: row_flags,
        });
    }
    Ok(rows)
}

fn score_flag(e: ScoreError) -> &'static str {
    match e {
        ScoreError::DegenerateCrossEntropy(_) => flags::DEGENERATE_CROSS_ENTROPY,
        ScoreError::RankUnavailable(_) => flags::RANK_UNAVAILABLE,
        _ => flags::INVALID_TRACE,
    }
}
