//! Synthetic inputs shared by the benchmarks.

use divkit::{Attack, Label, LabeledScore, Method, PairedTrace, TokenStep, TokenTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// An aligned general/adapted trace pair of `len` steps.
pub fn paired_trace(len: usize, seed: u64) -> PairedTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = |model: &str| {
        let steps = (0..len)
            .map(|i| {
                TokenStep::new(
                    format!(" w{i}"),
                    -rng.random_range(1e-3..10.0),
                    Some(rng.random_range(1..50)),
                )
            })
            .collect();
        TokenTrace::new(model, "bench", steps).expect("valid synthetic trace")
    };
    let general = steps("general");
    let adapted = steps("adapted");
    PairedTrace::new(general, adapted).expect("aligned synthetic traces")
}

/// `n` machine and `n` human DivScore-like values with coarse ties.
pub fn labeled_scores(n: usize, seed: u64) -> Vec<LabeledScore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row = |i: usize, label: Label, shift: f64| LabeledScore {
        doc_id: format!("{i}"),
        score: (rng.random_range(0..10_000) as f64) / 1e4 + shift,
        label,
        method: Method::Divscore,
        orientation: Method::Divscore.orientation(),
        domain: "medical".into(),
        source_model: (label == Label::Machine).then(|| "gpt-4o".into()),
        attack: Attack::None,
    };
    let mut out: Vec<LabeledScore> = (0..n).map(|i| row(i, Label::Machine, 0.0)).collect();
    out.extend((0..n).map(|i| row(n + i, Label::Human, 0.2)));
    out
}
