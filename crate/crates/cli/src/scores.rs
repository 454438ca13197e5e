use std::path::Path;

use anyhow::Context as _;
use divkit::{Attack, Label, LabeledScore, Method, Orientation};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Per-row diagnostic tags.
pub mod flags {
    pub const SHORT_TEXT: &str = "short_text";
    pub const DEGENERATE_CROSS_ENTROPY: &str = "degenerate_cross_entropy";
    pub const RANK_UNAVAILABLE: &str = "rank_unavailable";
    pub const TOKENIZER_MISMATCH: &str = "tokenizer_mismatch";
    pub const TRACE_MISSING: &str = "trace_missing";
    pub const EMPTY_TRACE: &str = "empty_trace";
    pub const INVALID_TRACE: &str = "invalid_trace";
}

/// One (record × method) line of a scores file. `value` is null when the
/// record could not be scored; `flags` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRow {
    pub doc_id: String,
    pub pair_id: String,
    pub method: Method,
    pub value: Option<f64>,
    pub orientation: Orientation,
    pub label: Label,
    pub domain: String,
    pub dataset: String,
    pub source_model: Option<String>,
    pub attack: Attack,
    pub flags: Vec<String>,
}

pub fn scores_to_jsonl(rows: &[ScoreRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("score rows serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRow>, Failure> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ScoreRow = serde_json::from_str(line)
            .map_err(|e| Failure::data(format!("scores line {}: {e}", i + 1)))?;
        if row.value.is_some_and(|v| !v.is_finite()) {
            return Err(Failure::data(format!(
                "scores line {}: value is not finite",
                i + 1
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scores {}", path.display()))
        .map_err(Failure::Data)?;
    parse_scores(&text)
}

/// Rows that carry a value, as metric inputs.
pub fn to_labeled(rows: &[ScoreRow]) -> Vec<LabeledScore> {
    rows.iter()
        .filter_map(|r| {
            Some(LabeledScore {
                doc_id: r.doc_id.clone(),
                score: r.value?,
                label: r.label,
                method: r.method,
                orientation: r.orientation,
                domain: r.domain.clone(),
                source_model: r.source_model.clone(),
                attack: r.attack,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: Option<f64>) -> ScoreRow {
        ScoreRow {
            doc_id: "d".into(),
            pair_id: "p".into(),
            method: Method::Divscore,
            value,
            orientation: Orientation::LowerIsMachine,
            label: Label::Machine,
            domain: "medical".into(),
            dataset: "MIMIC".into(),
            source_model: Some("gpt-4o".into()),
            attack: Attack::None,
            flags: vec![],
        }
    }

    #[test]
    fn schema_is_flat_and_ordered() {
        let line = scores_to_jsonl(&[row(Some(0.25))]);
        assert_eq!(
            line,
            "{\"doc_id\":\"d\",\"pair_id\":\"p\",\"method\":\"divscore\",\"value\":0.25,\"orientation\":\"lower_is_machine\",\"label\":\"machine\",\"domain\":\"medical\",\"dataset\":\"MIMIC\",\"source_model\":\"gpt-4o\",\"attack\":\"none\",\"flags\":[]}\n"
        );
        assert_eq!(parse_scores(&line).unwrap(), vec![row(Some(0.25))]);
    }

    #[test]
    fn null_values_are_kept_but_not_scored() {
        let rows = vec![row(None), row(Some(0.1))];
        let back = parse_scores(&scores_to_jsonl(&rows)).unwrap();
        assert_eq!(back, rows);
        assert_eq!(to_labeled(&back).len(), 1);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = format!("{}not json\n", scores_to_jsonl(&[row(Some(0.1))]));
        let err = parse_scores(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
