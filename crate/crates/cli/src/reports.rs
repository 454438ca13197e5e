use divkit::metrics::{calibrate_threshold, evaluate, EvalReport, GroupBy, GroupRow};
use divkit::{Label, LabeledScore, Method, Orientation};
use serde::Serialize;

use crate::scores::{to_labeled, ScoreRow};
use crate::Failure;

pub fn evaluate_rows(rows: &[ScoreRow], group_by: GroupBy, target_fpr: f64) -> EvalReport {
    let skipped = rows.iter().filter(|r| r.value.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} score rows without a value are left out of the report");
    }
    evaluate(&to_labeled(rows), group_by, target_fpr)
}

/// Pretty-printed JSON with a trailing newline.
pub fn report_to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

/// The scores behind one report row: its human pool plus its machine group.
pub fn group_members(scores: &[LabeledScore], row: &GroupRow) -> Vec<LabeledScore> {
    scores
        .iter()
        .filter(|s| s.method == row.method)
        .filter(|s| row.domain.as_ref().is_none_or(|d| *d == s.domain))
        .filter(|s| match s.label {
            Label::Human => true,
            Label::Machine => {
                row.source_model
                    .as_ref()
                    .is_none_or(|m| s.source_model.as_ref() == Some(m))
                    && row.attack.is_none_or(|a| a == s.attack)
            }
        })
        .cloned()
        .collect()
}

/// File name for a group's ROC export, e.g. `roc_divscore_medical_gpt-4o_none.csv`.
pub fn roc_file_name(row: &GroupRow) -> String {
    let part = |s: Option<&str>| -> String {
        s.unwrap_or("all")
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                    c
                } else {
                    '-'
                }
            })
            .collect()
    };
    format!(
        "roc_{}_{}_{}_{}.csv",
        row.method,
        part(row.domain.as_deref()),
        part(row.source_model.as_deref()),
        part(row.attack.map(|a| a.as_str()))
    )
}

/// Output of `calibrate`. `threshold` is null when no observed human score
/// fits the false-positive budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub method: Method,
    pub orientation: Orientation,
    pub threshold: Option<f64>,
    pub achieved_fpr: f64,
    pub target_fpr: f64,
    pub n_negatives: usize,
}

/// Human-only threshold calibration for one method. Machine rows, if
/// present, are ignored.
pub fn calibrate_rows(
    rows: &[ScoreRow],
    method: Option<Method>,
    target_fpr: f64,
) -> Result<CalibrationReport, Failure> {
    let method = pick_method(rows, method)?;
    let human: Vec<&ScoreRow> = rows
        .iter()
        .filter(|r| r.method == method && r.label == Label::Human)
        .collect();
    let values: Vec<f64> = human.iter().filter_map(|r| r.value).collect();
    let orientation = human
        .first()
        .map_or_else(|| method.orientation(), |r| r.orientation);
    if human.iter().any(|r| r.orientation != orientation) {
        return Err(Failure::data(format!(
            "{method} rows disagree on orientation"
        )));
    }
    let cal = calibrate_threshold(&values, target_fpr, orientation)
        .map_err(|e| Failure::data(format!("{method}: {e}")))?;
    Ok(CalibrationReport {
        method,
        orientation,
        threshold: cal.threshold.is_finite().then_some(cal.threshold),
        achieved_fpr: cal.achieved_fpr,
        target_fpr: cal.target_fpr,
        n_negatives: cal.n_negatives,
    })
}

/// The requested method, or the only method present.
pub(crate) fn pick_method(rows: &[ScoreRow], requested: Option<Method>) -> Result<Method, Failure> {
    if let Some(m) = requested {
        return Ok(m);
    }
    let mut present: Vec<Method> = rows.iter().map(|r| r.method).collect();
    present.sort();
    present.dedup();
    match present.as_slice() {
        [only] => Ok(*only),
        [] => Err(Failure::data("no score rows")),
        many => Err(Failure::config(format!(
            "scores hold several methods ({}); pick one with --method",
            many.iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use divkit::Attack;

    fn row(id: &str, label: Label, value: f64, method: Method) -> ScoreRow {
        ScoreRow {
            doc_id: id.into(),
            pair_id: id.into(),
            method,
            value: Some(value),
            orientation: method.orientation(),
            label,
            domain: "legal".into(),
            dataset: "LawStack".into(),
            source_model: (label == Label::Machine).then(|| "gpt-4o".into()),
            attack: Attack::None,
            flags: vec![],
        }
    }

    #[test]
    fn separable_scores_give_unit_auroc() {
        let rows = vec![
            row("h1", Label::Human, 0.30, Method::Divscore),
            row("h2", Label::Human, 0.31, Method::Divscore),
            row("m1", Label::Machine, 0.10, Method::Divscore),
        ];
        let r = evaluate_rows(&rows, GroupBy::default(), 0.001);
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].auroc, Some(1.0));
        assert_eq!(
            roc_file_name(&r.groups[0]),
            "roc_divscore_legal_gpt-4o_none.csv"
        );
        assert_eq!(group_members(&to_labeled(&rows), &r.groups[0]).len(), 3);
    }

    #[test]
    fn calibration_uses_humans_only() {
        let rows = vec![
            row("h1", Label::Human, 0.275714, Method::Divscore),
            row("m1", Label::Machine, 0.01, Method::Divscore),
        ];
        let c = calibrate_rows(&rows, None, 0.5).unwrap();
        assert_eq!(c.achieved_fpr, 0.0);
        assert_eq!(c.threshold, None);
        assert_eq!(c.n_negatives, 1);
    }

    #[test]
    fn ambiguous_method_needs_a_choice() {
        let rows = vec![
            row("h1", Label::Human, 0.3, Method::Divscore),
            row("h1", Label::Human, 0.3, Method::Entropy),
        ];
        assert_eq!(calibrate_rows(&rows, None, 0.1).unwrap_err().exit_code(), 1);
        assert_eq!(
            calibrate_rows(&rows, Some(Method::Entropy), 0.1)
                .unwrap()
                .method,
            Method::Entropy
        );
    }
}
