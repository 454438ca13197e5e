use divkit::theory::{
    closed_form_auroc, effective_kl, kl_divergence, simulate_auroc, std_normal_cdf, Categorical,
    GaussianDetectorModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// erf by its Maclaurin series; accurate to ~1e-13 for |x| <= 3.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for n in 1..200 {
        term *= -x2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// erfc for x >= 2 by the Laplace continued fraction, evaluated backwards.
fn erfc_cf(x: f64) -> f64 {
    let mut f = x;
    for k in (1..400).rev() {
        f = x + (k as f64 / 2.0) / f;
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
}

fn phi_oracle(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    if x.abs() <= 3.0 {
        0.5 * (1.0 + erf_series(x))
    } else if x > 0.0 {
        1.0 - 0.5 * erfc_cf(x)
    } else {
        0.5 * erfc_cf(-x)
    }
}

#[test]
fn oracle_pieces_agree_in_overlap() {
    for i in 0..=20 {
        let x = 2.0 + i as f64 * 0.05;
        assert!((1.0 - erf_series(x) - erfc_cf(x)).abs() < 1e-12, "x={x}");
    }
}

#[test]
fn cdf_within_1e10_of_oracle() {
    let mut worst: f64 = 0.0;
    for i in -1000..=1000 {
        let z = i as f64 * 0.01;
        worst = worst.max((std_normal_cdf(z) - phi_oracle(z)).abs());
    }
    assert!(worst <= 1e-10, "worst abs error {worst:e}");
}

#[test]
fn cdf_examples() {
    assert_eq!(std_normal_cdf(0.0), 0.5);
    for z in [0.1, 0.7, 1.3, 2.9, 5.0, 8.5] {
        assert!((std_normal_cdf(z) + std_normal_cdf(-z) - 1.0).abs() < 1e-15);
        // the lower tail stays representable far beyond where the upper rounds to 1
        assert!(std_normal_cdf(-z) > 0.0 && std_normal_cdf(-z) < 0.5);
    }
    assert!((std_normal_cdf(-8.5) / phi_oracle(-8.5) - 1.0).abs() < 1e-9);
    assert!((phi_oracle(1.959964) - 0.975).abs() < 1e-6);
    assert!((std_normal_cdf(1.959964) - 0.975).abs() < 1e-6);
}

#[test]
fn closed_form_unit_gap() {
    let m = GaussianDetectorModel::new(1.0, 1.0, 0.0, 1.0).unwrap();
    let oracle = phi_oracle(1.0 / 2f64.sqrt());
    assert!((closed_form_auroc(&m) - oracle).abs() < 1e-10);
    assert!((closed_form_auroc(&m) - 0.76025).abs() < 5e-6);
}

#[test]
fn closed_form_increases_with_gap() {
    // entropies and sigmas fixed; the KL to the source moves the human mean
    let mut last = 0.0;
    for i in -40..=40 {
        let kl_human = 1.0 + i as f64 * 0.05;
        let m =
            GaussianDetectorModel::from_decomposition(2.0, kl_human, 2.0, 1.0, 0.7, 1.3).unwrap();
        let a = closed_form_auroc(&m);
        assert!(a > last, "not increasing at delta {}", m.delta());
        last = a;
    }
}

#[test]
fn simulation_tracks_closed_form() {
    let m = GaussianDetectorModel::new(1.0, 1.0, 0.0, 1.0).unwrap();
    let a = simulate_auroc(&m, 200_000, 2024).unwrap();
    assert!((a - 0.760).abs() <= 0.01, "{a}");
    assert!((a - closed_form_auroc(&m)).abs() <= 0.01);
}

fn random_categorical(rng: &mut ChaCha8Rng, k: usize) -> Categorical {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    Categorical::from_weights(&w).unwrap()
}

fn kl_direct(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * pi.ln() - pi * qi.ln())
        .sum()
}

#[test]
fn effective_kl_composition_seed7() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = random_categorical(&mut rng, 4);
    let q = random_categorical(&mut rng, 4);
    let qp = random_categorical(&mut rng, 4);
    let eff = effective_kl(&p, &q, &qp).unwrap();
    let composed = kl_divergence(&p, &qp).unwrap() - kl_divergence(&q, &qp).unwrap();
    assert_eq!(eff, composed);
    let direct = kl_direct(p.probs(), qp.probs()) - kl_direct(q.probs(), qp.probs());
    assert!((eff - direct).abs() < 1e-14);
}

#[test]
fn kl_two_point_oracle() {
    let p = Categorical::new(vec![0.5, 0.5]).unwrap();
    let q = Categorical::new(vec![0.25, 0.75]).unwrap();
    let v = kl_divergence(&p, &q).unwrap();
    assert!((v - kl_direct(p.probs(), q.probs())).abs() < 1e-15);
    assert!((v - 0.143841).abs() < 1e-6);
}
