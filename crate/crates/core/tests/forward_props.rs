use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use su11tomo::forward::{probe_to_z, q_function, z_to_probe, ProbeSetting, QEvaluator};
use su11tomo::states::{state_pair_coherent, state_perelomov, DensityMatrix};

fn perelomov(r: f64, theta: f64, q: usize) -> DensityMatrix {
    state_perelomov(Complex64::from_polar(r, theta), q, 30).unwrap()
}

fn q_at(rho: &DensityMatrix, y: f64, phi: f64) -> f64 {
    q_function(rho, ProbeSetting::new(y, phi).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn q_is_a_probability(
        r in 0.0f64..0.9, theta in 0.0f64..TAU, q in 0usize..4,
        y in 0.001f64..0.999, phi in -20.0f64..20.0,
    ) {
        let v = q_at(&perelomov(r, theta, q), y, phi);
        prop_assert!(v.is_finite());
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn q_is_periodic_in_phi(
        r in 0.0f64..0.9, theta in 0.0f64..TAU, y in 0.01f64..0.99, phi in 0.0f64..TAU, turns in -3i32..4,
    ) {
        let rho = perelomov(r, theta, 1);
        let a = q_at(&rho, y, phi);
        let b = q_at(&rho, y, phi + TAU * turns as f64);
        prop_assert!((a - b).abs() < 1e-13, "{} vs {}", a, b);
    }

    #[test]
    fn diagonal_states_ignore_phi(
        weights in proptest::collection::vec(0.0f64..1.0, 1..8),
        y in 0.01f64..0.99, phi in 0.0f64..TAU,
    ) {
        let total: f64 = weights.iter().sum::<f64>() + 1e-3;
        let mut m = DMatrix::zeros(weights.len(), weights.len());
        for (i, w) in weights.iter().enumerate() {
            m[(i, i)] = Complex64::new(w / total, 0.0);
        }
        let rho = DensityMatrix::from_elements(2, m).unwrap();
        let a = q_at(&rho, y, phi);
        let b = q_at(&rho, y, 0.0);
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn q_is_linear_in_rho(
        r1 in 0.0f64..0.8, r2 in 0.0f64..0.8, t in 0.0f64..TAU, w in 0.0f64..1.0,
        y in 0.01f64..0.99, phi in 0.0f64..TAU,
    ) {
        let a = perelomov(r1, t, 0);
        let b = state_pair_coherent(Complex64::from_polar(3.0 * r2, -t), 0, 30);
        let mix = DensityMatrix::from_elements(0, a.elements() * Complex64::new(w, 0.0)
            + b.elements() * Complex64::new(1.0 - w, 0.0)).unwrap();
        let lhs = q_at(&mix, y, phi);
        let rhs = w * q_at(&a, y, phi) + (1.0 - w) * q_at(&b, y, phi);
        prop_assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn rank_one_path_matches_double_sum(
        r in 0.0f64..0.9, theta in 0.0f64..TAU, q in 0usize..4, y in 0.01f64..0.99, phi in 0.0f64..TAU,
    ) {
        let rho = perelomov(r, theta, q);
        let eval = QEvaluator::new(&rho);
        let s = ProbeSetting::new(y, phi).unwrap();
        let full = eval.evaluate_full(&s);
        let fast = eval.evaluate_rank_one(&s).unwrap();
        prop_assert!((full.re - fast).abs() < 1e-14);
        prop_assert!(full.im.abs() < 1e-14);
    }
}

#[test]
fn z_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let r = rng.random_range(0.05..2.0);
        let theta = rng.random_range(0.0..TAU);
        let z = Complex64::from_polar(r, theta);
        let back = probe_to_z(z_to_probe(z).unwrap());
        assert!((back - z).norm() < 1e-14, "{z} -> {back}");
    }
}

#[test]
fn bad_probes_rejected() {
    assert!(ProbeSetting::new(0.0, 0.0).is_err());
    assert!(ProbeSetting::new(1.0, 0.0).is_err());
    assert!(ProbeSetting::new(0.5, f64::NAN).is_err());
    assert!(z_to_probe(Complex64::default()).is_err());
}
