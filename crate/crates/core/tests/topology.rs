mod common;

use ctcr_consensus::linalg::RealMatrix;
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency, DirectedTopology};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Characteristic polynomial coefficients (constant first, monic) by the
/// Faddeev-LeVerrier recursion.
fn leverrier(a: &RealMatrix) -> Vec<f64> {
    let n = a.dim();
    let a = a.to_nalgebra();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = &a * &m + nalgebra::DMatrix::identity(n, n) * c[n + 1 - k];
        c[n - k] = -(&a * &m).trace() / k as f64;
    }
    c
}

/// Coefficients of `Π (x - λ_i)`, constant first.
fn expand(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= ci * r;
        }
        c = next;
    }
    c
}

fn assert_matches_leverrier(m: &RealMatrix, values: &[Complex64], tol: f64) {
    let reference = leverrier(m);
    let got = expand(values);
    assert_eq!(got.len(), reference.len());
    for (g, r) in got.iter().zip(&reference) {
        assert!((g - r).norm() < tol, "{got:?} vs {reference:?}");
    }
}

#[test]
fn five_agent_spectrum_matches_characteristic_polynomial() {
    let adj = weighted_adjacency(&five_agent_example()).unwrap();
    let values: Vec<Complex64> = adj.spectrum.eigenvalues.iter().map(|e| e.value).collect();
    assert_matches_leverrier(&adj.matrix, &values, 1e-10);
}

#[test]
fn five_agent_reference_values() {
    let adj = weighted_adjacency(&five_agent_example()).unwrap();
    let v: Vec<Complex64> = adj.spectrum.eigenvalues.iter().map(|e| e.value).collect();
    let expected = [(1.0, 0.0), (0.37744, 0.0), (-0.43872, 0.37243), (-0.43872, -0.37243), (-0.5, 0.0)];
    for (g, (re, im)) in v.iter().zip(expected) {
        assert!((g - Complex64::new(re, im)).norm() < 5e-5, "{g} vs {re}{im:+}i");
    }
}

#[test]
fn random_topologies_unit_multiplicity_and_disk() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut with_tree = 0;
    for trial in 0..200 {
        let n = 2 + trial % 6;
        let t = common::random_topology(&mut rng, n);
        let adj = weighted_adjacency(&t).unwrap();
        let values: Vec<Complex64> = adj.spectrum.eigenvalues.iter().map(|e| e.value).collect();
        assert_matches_leverrier(&adj.matrix, &values, 1e-7);
        // row-stochastic: spectrum in the closed unit disk, 1 always present
        assert!(values.iter().all(|v| v.norm() <= 1.0 + 1e-7), "{values:?}");
        assert!(adj.spectrum.unit_multiplicity() >= 1);
        // simple unit eigenvalue exactly when a spanning tree exists
        assert_eq!(adj.spectrum.unit_multiplicity() == 1, adj.spanning_tree, "{t:?}");
        with_tree += usize::from(adj.spanning_tree);
    }
    assert!(with_tree > 20 && with_tree < 200, "{with_tree}");
}

#[test]
fn disconnected_groups_add_unit_eigenvalues() {
    // three isolated pairs
    let t = DirectedTopology::from_edges(6, &[(1, 2), (2, 1), (3, 4), (4, 3), (5, 6), (6, 5)]).unwrap();
    let adj = weighted_adjacency(&t).unwrap();
    assert!(!adj.spanning_tree);
    assert_eq!(adj.spectrum.unit_multiplicity(), 3);
}

#[test]
fn edge_list_and_json_agree() {
    let text = DirectedTopology::parse(include_str!("../data/five_agent.edges")).unwrap();
    let edges: Vec<[usize; 2]> = five_agent_example().edges().into_iter().map(|(a, b)| [a, b]).collect();
    let json = serde_json::json!({ "n": 5, "edges": edges }).to_string();
    assert_eq!(DirectedTopology::parse(&json).unwrap(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_is_closed_under_conjugation(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = weighted_adjacency(&common::random_topology(&mut rng, n)).unwrap();
        let values: Vec<Complex64> = adj.spectrum.eigenvalues.iter().map(|e| e.value).collect();
        prop_assert_eq!(values.len(), n);
        for v in &values {
            let mirror = values.iter().map(|w| (w - v.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(mirror < 1e-8);
        }
        // rows sum to one
        for j in 0..n {
            prop_assert!((adj.matrix.row(j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
