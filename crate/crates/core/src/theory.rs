//! Gaussian performance model of an entropy-threshold detector.
//!
//! Entropy scores of human text are modelled as `N(mu_P, sigma_P^2)` and
//! those of machine text as `N(mu_Q, sigma_Q'^2)`. A detector flagging
//! scores below a threshold then has
//! `AUROC = Phi((mu_P - mu_Q) / sqrt(sigma_P^2 + sigma_Q'^2))`, and the mean
//! gap equals the effective KL divergence
//! `KL(P || Q') - KL(Q || Q')` when the entropy terms `H(P)` and `H(Q)`
//! coincide. The model parameterizes the means directly, so that equal-entropy
//! assumption is the caller's to make.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::metrics::{self, auroc_from_scores, LabeledScore, MetricsError};
use crate::scoring::Orientation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("invalid categorical distribution: {0}")]
    InvalidDistribution(String),
    #[error("support sizes differ ({0} vs {1})")]
    SupportMismatch(usize, usize),
    #[error("p[{0}] > 0 but q[{0}] = 0")]
    AbsoluteContinuityViolation(usize),
    #[error("standard deviations must be finite and > 0")]
    InvalidModel,
    #[error("need at least 2 samples per class")]
    TooFewSamples,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self, TheoryError> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(TheoryError::InvalidDistribution(
                "entries must be finite and >= 0".into(),
            ));
        }
        if !probs.iter().any(|p| *p > 0.0) {
            return Err(TheoryError::InvalidDistribution("no positive entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TheoryError::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self, TheoryError> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(TheoryError::InvalidDistribution(
                "weights must have a positive finite sum".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `Σ p_i ln(p_i / q_i)` in nats, with `0 · ln(0/q) = 0`.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64, TheoryError> {
    if p.len() != q.len() {
        return Err(TheoryError::SupportMismatch(p.len(), q.len()));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(TheoryError::AbsoluteContinuityViolation(i));
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative residue when p == q.
    Ok(total.max(0.0))
}

/// `KL(human || source) - KL(detector || source)`. Negative values mean the
/// detector model sits further from the source than human text does.
pub fn effective_kl(
    human: &Categorical,
    detector: &Categorical,
    source: &Categorical,
) -> Result<f64, TheoryError> {
    Ok(kl_divergence(human, source)? - kl_divergence(detector, source)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDetectorModel {
    pub mu_p: f64,
    pub sigma_p: f64,
    pub mu_q: f64,
    pub sigma_qp: f64,
}

impl GaussianDetectorModel {
    pub fn new(mu_p: f64, sigma_p: f64, mu_q: f64, sigma_qp: f64) -> Result<Self, TheoryError> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        if !(ok(sigma_p) && ok(sigma_qp) && mu_p.is_finite() && mu_q.is_finite()) {
            return Err(TheoryError::InvalidModel);
        }
        Ok(Self {
            mu_p,
            sigma_p,
            mu_q,
            sigma_qp,
        })
    }

    /// Means built from entropy plus divergence to the source:
    /// `mu_Q = H(Q) + KL(Q || Q')` and `mu_P = H(P) + KL(P || Q')`.
    pub fn from_decomposition(
        entropy_human: f64,
        kl_human_source: f64,
        entropy_detector: f64,
        kl_detector_source: f64,
        sigma_p: f64,
        sigma_qp: f64,
    ) -> Result<Self, TheoryError> {
        Self::new(
            entropy_human + kl_human_source,
            sigma_p,
            entropy_detector + kl_detector_source,
            sigma_qp,
        )
    }

    /// `mu_P - mu_Q`; equals the effective KL divergence when `H(P) = H(Q)`.
    pub fn delta(&self) -> f64 {
        self.mu_p - self.mu_q
    }
}

/// Standard normal CDF, `0.5 · erfc(-z / √2)`.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn closed_form_auroc(model: &GaussianDetectorModel) -> f64 {
    let scale = model.sigma_p.hypot(model.sigma_qp);
    std_normal_cdf(model.delta() / scale)
}

/// Standard normal variates by Marsaglia's polar method over ChaCha20.
///
/// Each accepted `(u, v)` pair yields two variates; the second is cached
/// and returned by the following call.
#[derive(Debug, Clone)]
pub struct NormalSampler {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u: f64 = self.rng.random::<f64>() * 2.0 - 1.0;
            let v: f64 = self.rng.random::<f64>() * 2.0 - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard()
    }
}

/// Empirical AUROC of `n_per_class` draws per class under `model`, scored
/// lower-is-machine. Machine draws come first from the stream, then human.
pub fn simulate_auroc(
    model: &GaussianDetectorModel,
    n_per_class: usize,
    seed: u64,
) -> Result<f64, TheoryError> {
    if n_per_class < 2 {
        return Err(TheoryError::TooFewSamples);
    }
    let mut sampler = NormalSampler::seeded(seed);
    let machine: Vec<f64> = (0..n_per_class)
        .map(|_| sampler.normal(model.mu_q, model.sigma_qp))
        .collect();
    let human: Vec<f64> = (0..n_per_class)
        .map(|_| sampler.normal(model.mu_p, model.sigma_p))
        .collect();
    Ok(auroc_from_scores(
        &machine,
        &human,
        Orientation::LowerIsMachine,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub delta: f64,
    pub sigma_p: f64,
    pub sigma_qp: f64,
    pub n: usize,
    pub closed_form: f64,
    pub empirical: f64,
}

impl GridRow {
    pub fn abs_err(&self) -> f64 {
        (self.empirical - self.closed_form).abs()
    }
}

/// Simulates every (delta, sigma pair) cell with `mu_Q = 0, mu_P = delta`.
/// Cell `i` (row-major, deltas outer) draws from its own generator seeded
/// with `seed + i`.
pub fn simulate_grid(
    deltas: &[f64],
    sigma_pairs: &[(f64, f64)],
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<GridRow>, TheoryError> {
    let mut rows = Vec::with_capacity(deltas.len() * sigma_pairs.len());
    for (i, (&delta, &(sigma_p, sigma_qp))) in deltas
        .iter()
        .flat_map(|d| sigma_pairs.iter().map(move |s| (d, s)))
        .enumerate()
    {
        let model = GaussianDetectorModel::new(delta, sigma_p, 0.0, sigma_qp)?;
        rows.push(GridRow {
            delta,
            sigma_p,
            sigma_qp,
            n: n_per_class,
            closed_form: closed_form_auroc(&model),
            empirical: simulate_auroc(&model, n_per_class, seed.wrapping_add(i as u64))?,
        });
    }
    Ok(rows)
}

pub fn grid_to_csv(rows: &[GridRow]) -> String {
    let g = metrics::format_g17;
    let mut out = String::from("delta,sigma_p,sigma_qp,n,closed_form,empirical,abs_err\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            g(r.delta),
            g(r.sigma_p),
            g(r.sigma_qp),
            r.n,
            g(r.closed_form),
            g(r.empirical),
            g(r.abs_err())
        );
    }
    out
}

/// A strictly monotone score transform.
#[derive(Debug, Clone, Copy)]
pub struct MonotoneMap {
    pub name: &'static str,
    pub apply: fn(f64) -> f64,
    pub increasing: bool,
}

impl MonotoneMap {
    /// Affine increasing, exp, affine decreasing and negation.
    pub fn standard_family() -> Vec<MonotoneMap> {
        vec![
            MonotoneMap {
                name: "affine_increasing",
                apply: |x| 2.0 * x + 3.0,
                increasing: true,
            },
            MonotoneMap {
                name: "exp",
                apply: f64::exp,
                increasing: true,
            },
            MonotoneMap {
                name: "affine_decreasing",
                apply: |x| 1.0 - 3.0 * x,
                increasing: false,
            },
            MonotoneMap {
                name: "negation",
                apply: |x| -x,
                increasing: false,
            },
        ]
    }
}

/// Outcome of re-evaluating a score set after one transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformCheck {
    pub map: &'static str,
    pub auroc_before: f64,
    pub auroc_after: f64,
    pub tpr_before: f64,
    pub tpr_after: f64,
}

impl TransformCheck {
    /// Bit-level equality of AUROC and TPR before and after.
    pub fn passed(&self) -> bool {
        self.auroc_before.to_bits() == self.auroc_after.to_bits()
            && self.tpr_before.to_bits() == self.tpr_after.to_bits()
    }
}

/// Applies each map to every score (flipping orientation for decreasing
/// maps) and records AUROC and TPR at `target_fpr` before and after.
pub fn monotone_transform_suite(
    scores: &[LabeledScore],
    maps: &[MonotoneMap],
    target_fpr: f64,
) -> Result<Vec<TransformCheck>, TheoryError> {
    let auroc_before = metrics::auroc(scores)?;
    let (tpr_before, _) = metrics::tpr_at_fpr(scores, target_fpr)?;
    maps.iter()
        .map(|m| {
            let mapped: Vec<LabeledScore> = scores
                .iter()
                .map(|s| LabeledScore {
                    score: (m.apply)(s.score),
                    orientation: if m.increasing {
                        s.orientation
                    } else {
                        s.orientation.flipped()
                    },
                    ..s.clone()
                })
                .collect();
            Ok(TransformCheck {
                map: m.name,
                auroc_before,
                auroc_after: metrics::auroc(&mapped)?,
                tpr_before,
                tpr_after: metrics::tpr_at_fpr(&mapped, target_fpr)?.0,
            })
        })
        .collect()
}
