use serde::{Deserialize, Serialize};

use super::{from_key, to_key, LabeledScore, MetricsError, Split};
use crate::scoring::Orientation;

/// One operating point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub achieved_fpr: f64,
    pub target_fpr: f64,
    pub n_negatives: usize,
}

/// `floor(target · n)`, the number of human false positives a target FPR
/// admits. A 1e-9 guard absorbs products like `0.29 · 100` landing just
/// under an integer.
pub fn allowed_false_positives(target_fpr: f64, n_negatives: usize) -> usize {
    (target_fpr * n_negatives as f64 + 1e-9).floor() as usize
}

fn check_target(target_fpr: f64) -> Result<(), MetricsError> {
    if target_fpr > 0.0 && target_fpr < 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidTarget(target_fpr))
    }
}

/// The infinite threshold that classifies nothing as machine.
fn sentinel(orientation: Orientation) -> f64 {
    from_key(f64::INFINITY, orientation)
}

/// Cumulative (key, machine_count, human_count) at each distinct key,
/// scanning from most to least machine-like.
fn sweep(machine: &[f64], human: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut all: Vec<(f64, bool)> = machine
        .iter()
        .map(|&k| (k, true))
        .chain(human.iter().map(|&k| (k, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(k, is_machine)) in all.iter().enumerate() {
        if is_machine {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = all.get(i + 1).is_none_or(|next| next.0 != k);
        if last_of_group {
            out.push((k, tp, fp));
        }
    }
    out
}

/// Mann–Whitney AUROC in key space via doubled mid-rank sums, so the
/// result is an exact integer ratio.
pub(crate) fn auroc_keys(machine: &[f64], human: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = machine
        .iter()
        .map(|&k| (k, true))
        .chain(human.iter().map(|&k| (k, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_m = machine.len() as u64;
    let n_h = human.len() as u64;
    // Sum over machine items of twice their (mid-)rank, ascending order.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let mut machines_in_group = 0u64;
        while j < all.len() && all[j].0 == all[i].0 {
            machines_in_group += u64::from(all[j].1);
            j += 1;
        }
        // ranks i+1..=j; twice the mid-rank is (i + 1) + j
        twice_rank_sum += (i as u64 + 1 + j as u64) * machines_in_group;
        i = j;
    }
    let twice_u = twice_rank_sum - n_m * (n_m + 1);
    twice_u as f64 / (2 * n_m * n_h) as f64
}

/// Probability that a random machine item is more machine-like than a
/// random human item, ties counting one half.
pub fn auroc(scores: &[LabeledScore]) -> Result<f64, MetricsError> {
    let s = Split::new(scores)?;
    Ok(auroc_keys(&s.machine, &s.human))
}

/// [`auroc`] over bare score slices.
pub fn auroc_from_scores(
    machine: &[f64],
    human: &[f64],
    orientation: Orientation,
) -> Result<f64, MetricsError> {
    if let Some(bad) = machine.iter().chain(human).find(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteScore(bad.to_string()));
    }
    let s = Split::from_keys(
        machine.iter().map(|&v| to_key(v, orientation)).collect(),
        human.iter().map(|&v| to_key(v, orientation)).collect(),
        orientation,
    )?;
    Ok(auroc_keys(&s.machine, &s.human))
}

/// Threshold sweep over every distinct observed score, preceded by the
/// sentinel point at (0, 0).
pub fn roc_curve(scores: &[LabeledScore]) -> Result<RocCurve, MetricsError> {
    let s = Split::new(scores)?;
    let n_m = s.machine.len() as f64;
    let n_h = s.human.len() as f64;
    let mut points = vec![RocPoint {
        threshold: sentinel(s.orientation),
        fpr: 0.0,
        tpr: 0.0,
    }];
    points.extend(
        sweep(&s.machine, &s.human)
            .into_iter()
            .map(|(k, tp, fp)| RocPoint {
                threshold: from_key(k, s.orientation),
                fpr: fp as f64 / n_h,
                tpr: tp as f64 / n_m,
            }),
    );
    Ok(RocCurve {
        points,
        orientation: s.orientation,
    })
}

/// Trapezoidal area under a curve's (fpr, tpr) points.
pub fn trapezoid_area(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Best TPR whose human false positives stay within
/// `floor(target · n_human)`. The threshold is the most permissive
/// observed score meeting that budget.
pub fn tpr_at_fpr(
    scores: &[LabeledScore],
    target_fpr: f64,
) -> Result<(f64, CalibrationResult), MetricsError> {
    check_target(target_fpr)?;
    let s = Split::new(scores)?;
    let n_h = s.human.len();
    let budget = allowed_false_positives(target_fpr, n_h);
    let mut best = (sentinel(s.orientation), 0usize, 0usize);
    for (k, tp, fp) in sweep(&s.machine, &s.human) {
        if fp > budget {
            break;
        }
        best = (from_key(k, s.orientation), tp, fp);
    }
    let (threshold, tp, fp) = best;
    Ok((
        tp as f64 / s.machine.len() as f64,
        CalibrationResult {
            threshold,
            achieved_fpr: fp as f64 / n_h as f64,
            target_fpr,
            n_negatives: n_h,
        },
    ))
}

/// Zero-shot calibration from human scores alone: the most permissive
/// observed human score whose empirical FPR stays within the target, or
/// the sentinel if even the most machine-like human score overshoots it.
pub fn calibrate_threshold(
    human_scores: &[f64],
    target_fpr: f64,
    orientation: Orientation,
) -> Result<CalibrationResult, MetricsError> {
    check_target(target_fpr)?;
    if human_scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(bad) = human_scores.iter().find(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteScore(bad.to_string()));
    }
    let keys: Vec<f64> = human_scores
        .iter()
        .map(|&v| to_key(v, orientation))
        .collect();
    let n = keys.len();
    let budget = allowed_false_positives(target_fpr, n);
    let mut best = (sentinel(orientation), 0usize);
    for (k, _, fp) in sweep(&[], &keys) {
        if fp > budget {
            break;
        }
        best = (from_key(k, orientation), fp);
    }
    Ok(CalibrationResult {
        threshold: best.0,
        achieved_fpr: best.1 as f64 / n as f64,
        target_fpr,
        n_negatives: n,
    })
}
