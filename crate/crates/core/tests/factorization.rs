mod common;

use ctcr_consensus::factorization::{factorize, FactorError, FactorKind, Gains, ModalTransform, QuasiPolynomial};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n(s) - λ d(s)` straight from the scalar closed-loop equation.
fn scalar_factor(lambda: Complex64, gains: Gains, s: Complex64, tau1: f64, tau2: f64) -> Complex64 {
    let n = s * s + gains.d * s + gains.p;
    let d = gains.d * s * (-tau2 * s).exp() + gains.p * (-tau1 * s).exp();
    n - lambda * d
}

fn point() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-2.0..2.0f64, -6.0..6.0f64, 0.0..6.0f64, 0.0..6.0f64)
}

#[test]
fn five_agent_product_identity() {
    let adj = weighted_adjacency(&five_agent_example()).unwrap();
    let gains = Gains::new(2.0, 0.8).unwrap();
    let factors = factorize(&adj, gains).unwrap();
    assert_eq!(factors.iter().map(|q| q.order).sum::<usize>(), 2 * adj.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let s = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-4.0..4.0));
        let (t1, t2) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let product: Complex64 = factors.iter().map(|q| q.evaluate(s, t1, t2)).product();
        let direct = common::direct_determinant(&adj.matrix, gains, s, t1, t2);
        assert!((product - direct).norm() <= 1e-9 * direct.norm().max(1.0), "{product} vs {direct}");
    }
}

#[test]
fn modal_coordinates_recover_positions() {
    let adj = weighted_adjacency(&five_agent_example()).unwrap();
    let modal = ModalTransform::new(&adj).unwrap();
    let x = [1.0, -2.0, 0.5, 3.0, -0.25];
    let xi = modal.modal(&x);
    // left Perron vector: πᵀC = πᵀ with Σπ = 1, last equation swapped for the sum
    let mut m = adj.matrix.to_nalgebra().transpose() - nalgebra::DMatrix::<f64>::identity(5, 5);
    let mut rhs = nalgebra::DVector::<f64>::zeros(5);
    for k in 0..5 {
        m[(4, k)] = 1.0;
    }
    rhs[4] = 1.0;
    let pi = m.lu().solve(&rhs).unwrap();
    let weighted: f64 = (0..5).map(|k| pi[k] * x[k]).sum();
    assert!((xi[0] / 5f64.sqrt() - weighted).abs() < 1e-12, "{} vs {weighted}", xi[0] / 5f64.sqrt());
    // agreement has no disagreement content
    let agreed = modal.modal(&[2.0; 5]);
    assert!((agreed[0] - 2.0 * 5f64.sqrt()).abs() < 1e-12);
    assert!(agreed[1..].iter().all(|v| v.abs() < 1e-12));
    for j in 0..5 {
        let back: f64 = (0..5).map(|k| modal.t[(j, k)] * xi[k]).sum();
        assert!((back - x[j]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_identity_on_random_topologies(seed in any::<u64>(), n in 2usize..=5, p in 0.2..4.0f64, d in 0.1..3.0f64, (re, im, t1, t2) in point()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = weighted_adjacency(&common::random_topology(&mut rng, n)).unwrap();
        let gains = Gains::new(p, d).unwrap();
        let factors = match factorize(&adj, gains) {
            Ok(f) => f,
            Err(FactorError::Defective { .. }) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let s = Complex64::new(re, im);
        let product: Complex64 = factors.iter().map(|q| q.evaluate(s, t1, t2)).product();
        let direct = common::direct_determinant(&adj.matrix, gains, s, t1, t2);
        prop_assert!((product - direct).norm() <= 1e-8 * direct.norm().max(1.0), "{} vs {}", product, direct);
    }

    #[test]
    fn conjugate_symmetry(lre in -1.0..1.0f64, lim in 0.0..1.0f64, (re, im, t1, t2) in point()) {
        let gains = Gains::new(2.0, 0.8).unwrap();
        let lambda = Complex64::new(lre, lim);
        let q = if lim < 0.05 { QuasiPolynomial::real(lre, gains) } else { QuasiPolynomial::complex_pair(lambda, gains) };
        let s = Complex64::new(re, im);
        let a = q.evaluate(s.conj(), t1, t2);
        let b = q.evaluate(s, t1, t2).conj();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn complex_pair_is_product_of_scalar_factors(lre in -1.0..1.0f64, lim in 0.05..1.0f64, p in 0.2..4.0f64, d in 0.1..3.0f64, (re, im, t1, t2) in point()) {
        let gains = Gains::new(p, d).unwrap();
        let lambda = Complex64::new(lre, lim);
        let q = QuasiPolynomial::complex_pair(lambda, gains);
        prop_assert_eq!(q.kind, FactorKind::ComplexDisagreement);
        prop_assert_eq!(q.order, 4);
        let s = Complex64::new(re, im);
        let oracle = scalar_factor(lambda, gains, s, t1, t2) * scalar_factor(lambda.conj(), gains, s, t1, t2);
        let got = q.evaluate(s, t1, t2);
        prop_assert!((got - oracle).norm() <= 1e-10 * oracle.norm().max(1.0), "{} vs {}", got, oracle);
    }

    #[test]
    fn real_factor_matches_scalar_equation(l in -1.0..1.0f64, (re, im, t1, t2) in point()) {
        let gains = Gains::new(2.0, 0.8).unwrap();
        let s = Complex64::new(re, im);
        let got = QuasiPolynomial::real(l, gains).evaluate(s, t1, t2);
        let oracle = scalar_factor(Complex64::new(l, 0.0), gains, s, t1, t2);
        prop_assert!((got - oracle).norm() <= 1e-12 * oracle.norm().max(1.0));
    }

    #[test]
    fn centroid_vanishes_at_origin(t1 in 0.0..100.0f64, t2 in 0.0..100.0f64, p in 0.1..5.0f64, d in 0.1..5.0f64) {
        let q = QuasiPolynomial::real(1.0, Gains::new(p, d).unwrap());
        prop_assert!(q.is_centroid());
        prop_assert_eq!(q.evaluate(Complex64::new(0.0, 0.0), t1, t2), Complex64::new(0.0, 0.0));
    }
}
