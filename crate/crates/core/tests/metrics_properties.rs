use divkit::metrics::{
    allowed_false_positives, auroc, calibrate_threshold, evaluate, roc_curve, tpr_at_fpr,
    trapezoid_area, GroupBy,
};
use divkit::{Attack, Label, LabeledScore, Method, Orientation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labeled(
    machine: &[f64],
    human: &[f64],
    method: Method,
    orientation: Orientation,
) -> Vec<LabeledScore> {
    let mk = |i: usize, v: f64, label: Label| LabeledScore {
        doc_id: format!("{label:?}-{i}"),
        score: v,
        label,
        method,
        orientation,
        domain: "medical".into(),
        source_model: (label == Label::Machine).then(|| "src".to_string()),
        attack: Attack::None,
    };
    machine
        .iter()
        .enumerate()
        .map(|(i, &v)| mk(i, v, Label::Machine))
        .chain(
            human
                .iter()
                .enumerate()
                .map(|(i, &v)| mk(i, v, Label::Human)),
        )
        .collect()
}

fn machine_like(a: f64, b: f64, o: Orientation) -> std::cmp::Ordering {
    match o {
        Orientation::LowerIsMachine => b.total_cmp(&a),
        Orientation::HigherIsMachine => a.total_cmp(&b),
    }
}

/// O(n²) pairwise Mann–Whitney count.
fn pairwise_auroc(machine: &[f64], human: &[f64], o: Orientation) -> f64 {
    let mut twice = 0u64;
    for &m in machine {
        for &h in human {
            twice += match machine_like(m, h, o) {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2 * machine.len() * human.len()) as f64
}

fn classified_machine(score: f64, threshold: f64, o: Orientation) -> bool {
    match o {
        Orientation::LowerIsMachine => score <= threshold,
        Orientation::HigherIsMachine => score >= threshold,
    }
}

/// Tries every observed value (and the sentinel) as a threshold and keeps
/// the best TPR within the false-positive budget.
fn exhaustive_tpr(machine: &[f64], human: &[f64], target: f64, o: Orientation) -> (f64, f64) {
    let budget = allowed_false_positives(target, human.len());
    let sentinel = match o {
        Orientation::LowerIsMachine => f64::NEG_INFINITY,
        Orientation::HigherIsMachine => f64::INFINITY,
    };
    let mut best = (0.0, sentinel);
    for &t in machine.iter().chain(human) {
        let fp = human
            .iter()
            .filter(|&&h| classified_machine(h, t, o))
            .count();
        if fp > budget {
            continue;
        }
        let tpr = machine
            .iter()
            .filter(|&&m| classified_machine(m, t, o))
            .count() as f64
            / machine.len() as f64;
        if tpr > best.0 {
            best = (tpr, t);
        }
    }
    best
}

fn tied_scores(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
    (0..n)
        .map(|_| (rng.random_range(0..40) as f64) / 8.0 + shift)
        .collect()
}

#[test]
fn auroc_equals_pairwise_seed42() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let m: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
    let h: Vec<f64> = (0..50).map(|_| rng.random::<f64>() + 0.2).collect();
    for o in [Orientation::LowerIsMachine, Orientation::HigherIsMachine] {
        let s = labeled(&m, &h, Method::Divscore, o);
        assert_eq!(
            auroc(&s).unwrap().to_bits(),
            pairwise_auroc(&m, &h, o).to_bits()
        );
    }
}

#[test]
fn roc_area_matches_auroc_random_100() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let m: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let h: Vec<f64> = (0..100).map(|_| rng.random::<f64>() + 0.1).collect();
    let s = labeled(&m, &h, Method::Divscore, Orientation::LowerIsMachine);
    let c = roc_curve(&s).unwrap();
    assert!((trapezoid_area(&c) - auroc(&s).unwrap()).abs() <= 1e-12);
}

#[test]
fn roc_area_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let m = tied_scores(&mut rng, 60, 0.0);
        let h = tied_scores(&mut rng, 70, 0.5);
        let s = labeled(&m, &h, Method::Entropy, Orientation::LowerIsMachine);
        let c = roc_curve(&s).unwrap();
        assert!((trapezoid_area(&c) - auroc(&s).unwrap()).abs() <= 1e-9);
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert_eq!((c.points[0].fpr, c.points[0].tpr), (0.0, 0.0));
        let last = c.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }
}

#[test]
fn tpr_at_fpr_equals_exhaustive_sweep_200() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for trial in 0..20 {
        let o = if trial % 2 == 0 {
            Orientation::LowerIsMachine
        } else {
            Orientation::HigherIsMachine
        };
        let m = tied_scores(&mut rng, 200, 0.0);
        let h = tied_scores(
            &mut rng,
            200,
            if o == Orientation::LowerIsMachine {
                0.8
            } else {
                -0.8
            },
        );
        for target in [0.001, 0.01, 0.05, 0.2] {
            let s = labeled(&m, &h, Method::Divscore, o);
            let (tpr, cal) = tpr_at_fpr(&s, target).unwrap();
            let (best_tpr, best_t) = exhaustive_tpr(&m, &h, target, o);
            assert_eq!(tpr, best_tpr, "trial {trial} target {target}");
            if best_tpr > 0.0 {
                // the implementation reports the most permissive threshold with that TPR
                let fp = h
                    .iter()
                    .filter(|&&x| classified_machine(x, cal.threshold, o))
                    .count();
                assert!(fp <= allowed_false_positives(target, h.len()));
                let tp = m
                    .iter()
                    .filter(|&&x| classified_machine(x, cal.threshold, o))
                    .count();
                assert_eq!(tp as f64 / m.len() as f64, tpr);
                let _ = best_t;
            }
        }
    }
}

#[test]
fn thousand_humans_admit_at_most_one_fp() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let h: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 0.3 + 0.1).collect();
    let m: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 0.3).collect();
    let s = labeled(&m, &h, Method::Divscore, Orientation::LowerIsMachine);
    let (_, cal) = tpr_at_fpr(&s, 0.001).unwrap();
    let fp = h.iter().filter(|&&x| x <= cal.threshold).count();
    assert!(fp <= 1);
    assert!(cal.achieved_fpr <= 0.001);
}

#[test]
fn calibrate_matches_sort_and_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    for target in [0.001, 0.01, 0.05, 0.1] {
        let c = calibrate_threshold(&h, target, Orientation::LowerIsMachine).unwrap();
        let mut sorted = h.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (target * 1000.0).round() as usize;
        // continuous draws: no ties, so the k-th smallest value is the threshold
        assert_eq!(c.threshold, sorted[k - 1], "target {target}");
        assert_eq!(c.achieved_fpr, k as f64 / 1000.0);

        let hi = calibrate_threshold(&h, target, Orientation::HigherIsMachine).unwrap();
        assert_eq!(hi.threshold, sorted[1000 - k]);
    }
}

#[test]
fn evaluate_rows_match_individual_auroc() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m1 = tied_scores(&mut rng, 30, 0.0);
    let h1 = tied_scores(&mut rng, 30, 0.7);
    let m2 = tied_scores(&mut rng, 30, 0.0);
    let h2 = tied_scores(&mut rng, 30, -0.2);
    let a = labeled(&m1, &h1, Method::Divscore, Orientation::LowerIsMachine);
    let b = labeled(
        &m2,
        &h2,
        Method::LogLikelihood,
        Orientation::HigherIsMachine,
    );
    let all: Vec<LabeledScore> = a.iter().chain(&b).cloned().collect();
    let report = evaluate(&all, GroupBy::default(), 0.01);
    assert_eq!(report.groups.len(), 2);
    assert_eq!(report.groups[0].method, Method::Divscore);
    assert_eq!(report.groups[0].auroc, Some(auroc(&a).unwrap()));
    assert_eq!(report.groups[1].auroc, Some(auroc(&b).unwrap()));
    assert_eq!(
        report.groups[1].tpr_at_target,
        Some(tpr_at_fpr(&b, 0.01).unwrap().0)
    );
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-20i32..20, 1..60),
        prop::collection::vec(-20i32..20, 1..60),
    )
        .prop_map(|(m, h)| {
            (
                m.into_iter().map(|v| v as f64 / 4.0).collect(),
                h.into_iter().map(|v| v as f64 / 4.0).collect(),
            )
        })
}

proptest! {
    #[test]
    fn auroc_matches_pairwise((m, h) in instance(), lower in any::<bool>()) {
        let o = if lower { Orientation::LowerIsMachine } else { Orientation::HigherIsMachine };
        let s = labeled(&m, &h, Method::Rank, o);
        prop_assert_eq!(auroc(&s).unwrap().to_bits(), pairwise_auroc(&m, &h, o).to_bits());
    }

    #[test]
    fn label_swap_complements((m, h) in instance()) {
        let o = Orientation::LowerIsMachine;
        let a = auroc(&labeled(&m, &h, Method::Divscore, o)).unwrap();
        let b = auroc(&labeled(&h, &m, Method::Divscore, o)).unwrap();
        prop_assert_eq!(a + b, 1.0);
    }

    #[test]
    fn outputs_are_bounded((m, h) in instance(), target in 0.001f64..0.999) {
        let s = labeled(&m, &h, Method::Divscore, Orientation::LowerIsMachine);
        let a = auroc(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let (tpr, cal) = tpr_at_fpr(&s, target).unwrap();
        prop_assert!((0.0..=1.0).contains(&tpr));
        prop_assert!((0.0..=1.0).contains(&cal.achieved_fpr));
        prop_assert!(cal.achieved_fpr <= target);
        for p in roc_curve(&s).unwrap().points {
            prop_assert!((0.0..=1.0).contains(&p.fpr) && (0.0..=1.0).contains(&p.tpr));
        }
    }

    #[test]
    fn calibration_is_sound(h in prop::collection::vec(-50i32..50, 1..300), target in 0.0005f64..0.9995, lower in any::<bool>()) {
        let o = if lower { Orientation::LowerIsMachine } else { Orientation::HigherIsMachine };
        let h: Vec<f64> = h.into_iter().map(|v| v as f64 / 10.0).collect();
        let c = calibrate_threshold(&h, target, o).unwrap();
        let fp = h.iter().filter(|&&x| classified_machine(x, c.threshold, o)).count();
        prop_assert!(fp <= allowed_false_positives(target, h.len()));
        prop_assert!(c.achieved_fpr <= target);
    }

    #[test]
    fn strictly_increasing_maps_preserve_metrics((m, h) in instance()) {
        let o = Orientation::LowerIsMachine;
        let base = labeled(&m, &h, Method::Divscore, o);
        let a0 = auroc(&base).unwrap();
        let t0 = tpr_at_fpr(&base, 0.1).unwrap().0;
        let mapped: Vec<f64> = m.iter().map(|x| 3.0 * x - 1.0).collect();
        let mapped_h: Vec<f64> = h.iter().map(|x| 3.0 * x - 1.0).collect();
        let s = labeled(&mapped, &mapped_h, Method::Divscore, o);
        prop_assert_eq!(auroc(&s).unwrap(), a0);
        prop_assert_eq!(tpr_at_fpr(&s, 0.1).unwrap().0, t0);
        let neg: Vec<f64> = m.iter().map(|x| -x).collect();
        let neg_h: Vec<f64> = h.iter().map(|x| -x).collect();
        let s = labeled(&neg, &neg_h, Method::Divscore, o.flipped());
        prop_assert_eq!(auroc(&s).unwrap(), a0);
        let c0 = roc_curve(&base).unwrap();
        let c1 = roc_curve(&s).unwrap();
        let shape = |c: &divkit::RocCurve| c.points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>();
        prop_assert_eq!(shape(&c0), shape(&c1));
    }
}
