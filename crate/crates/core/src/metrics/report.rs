use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::roc::{auroc, tpr_at_fpr};
use super::{format_g17, LabeledScore, MetricsError, RocCurve};
use crate::corpus::{Attack, Label};
use crate::scoring::Method;

/// Optional grouping axes. Method is always a grouping axis.
///
/// Human texts carry no source model and no attack, so those two axes only
/// split the machine side; every machine group is scored against the full
/// human pool of its (method, domain).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupBy {
    pub domain: bool,
    pub source_model: bool,
    pub attack: bool,
}

impl Default for GroupBy {
    fn default() -> Self {
        Self {
            domain: true,
            source_model: true,
            attack: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub method: Method,
    pub domain: Option<String>,
    pub source_model: Option<String>,
    pub attack: Option<Attack>,
    pub n_human: usize,
    pub n_machine: usize,
    pub auroc: Option<f64>,
    pub tpr_at_target: Option<f64>,
    pub target_fpr: f64,
    /// `None` when no observed score meets the FPR budget (infinite sentinel)
    /// or when the group could not be evaluated.
    pub threshold: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub groups: Vec<GroupRow>,
}

type PoolKey = (Method, Option<String>);
type GroupKey = (Method, Option<String>, Option<String>, Option<Attack>);

/// Per-group AUROC, TPR at `target_fpr` and threshold. A failing group
/// yields a flagged row; other groups are unaffected. Rows are sorted by
/// group key.
pub fn evaluate(scores: &[LabeledScore], group_by: GroupBy, target_fpr: f64) -> EvalReport {
    let domain_of = |s: &LabeledScore| group_by.domain.then(|| s.domain.clone());
    let mut humans: BTreeMap<PoolKey, Vec<&LabeledScore>> = BTreeMap::new();
    let mut machines: BTreeMap<GroupKey, Vec<&LabeledScore>> = BTreeMap::new();
    for s in scores {
        match s.label {
            Label::Human => humans.entry((s.method, domain_of(s))).or_default().push(s),
            Label::Machine => machines
                .entry((
                    s.method,
                    domain_of(s),
                    if group_by.source_model {
                        s.source_model.clone()
                    } else {
                        None
                    },
                    group_by.attack.then_some(s.attack),
                ))
                .or_default()
                .push(s),
        }
    }

    let mut rows: BTreeMap<GroupKey, GroupRow> = BTreeMap::new();
    for (key, machine) in &machines {
        let pool = humans
            .get(&(key.0, key.1.clone()))
            .map(Vec::as_slice)
            .unwrap_or_default();
        let members: Vec<LabeledScore> = pool.iter().chain(machine).map(|s| (*s).clone()).collect();
        rows.insert(
            key.clone(),
            score_group(key, &members, pool.len(), machine.len(), target_fpr),
        );
    }
    for ((method, domain), pool) in &humans {
        let has_machines = machines.keys().any(|k| k.0 == *method && k.1 == *domain);
        if !has_machines {
            let key: GroupKey = (*method, domain.clone(), None, None);
            let members: Vec<LabeledScore> = pool.iter().map(|s| (*s).clone()).collect();
            rows.insert(
                key.clone(),
                score_group(&key, &members, pool.len(), 0, target_fpr),
            );
        }
    }
    EvalReport {
        groups: rows.into_values().collect(),
    }
}

fn score_group(
    key: &GroupKey,
    members: &[LabeledScore],
    n_human: usize,
    n_machine: usize,
    target_fpr: f64,
) -> GroupRow {
    let mut row = GroupRow {
        method: key.0,
        domain: key.1.clone(),
        source_model: key.2.clone(),
        attack: key.3,
        n_human,
        n_machine,
        auroc: None,
        tpr_at_target: None,
        target_fpr,
        threshold: None,
        flags: Vec::new(),
    };
    let result = auroc(members).and_then(|a| tpr_at_fpr(members, target_fpr).map(|t| (a, t)));
    match result {
        Ok((a, (tpr, cal))) => {
            row.auroc = Some(a);
            row.tpr_at_target = Some(tpr);
            if cal.threshold.is_finite() {
                row.threshold = Some(cal.threshold);
            } else {
                row.flags.push("threshold_sentinel".into());
            }
        }
        Err(e) => row.flags.push(flag_for(&e)),
    }
    row
}

fn flag_for(e: &MetricsError) -> String {
    match e {
        MetricsError::DegenerateLabels { .. } => "degenerate_labels".into(),
        MetricsError::MixedMethods => "mixed_methods".into(),
        MetricsError::NonFiniteScore(_) => "non_finite_score".into(),
        MetricsError::InvalidTarget(_) => "invalid_target".into(),
        MetricsError::EmptyInput => "empty_input".into(),
    }
}

/// `threshold,fpr,tpr` CSV with 17 significant digits per value.
pub fn roc_to_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_g17(p.threshold),
            format_g17(p.fpr),
            format_g17(p.tpr)
        );
    }
    out
}
