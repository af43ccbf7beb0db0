#![allow(dead_code)]

use ctcr_consensus::factorization::Gains;
use ctcr_consensus::linalg::RealMatrix;
use ctcr_consensus::topology::DirectedTopology;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;

/// Every agent gets between one and `n - 1` distinct informers, mostly one so
/// that topologies without a spanning tree are common.
pub fn random_topology<R: Rng>(rng: &mut R, n: usize) -> DirectedTopology {
    let mut edges = Vec::new();
    for j in 0..n {
        let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
        let count = if rng.random_bool(0.7) { 1 } else { rng.random_range(1..n) };
        for idx in sample(rng, others.len(), count) {
            edges.push((others[idx] + 1, j + 1));
        }
    }
    DirectedTopology::from_edges(n, &edges).unwrap()
}

/// `det(sI - A - B1 e^{-τ1 s} - B2 e^{-τ2 s})` of the full 2n-state model.
pub fn direct_determinant(c: &RealMatrix, gains: Gains, s: Complex64, tau1: f64, tau2: f64) -> Complex64 {
    let n = c.dim();
    let e1 = (-s * tau1).exp();
    let e2 = (-s * tau2).exp();
    let mut m = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        m[(2 * j, 2 * j)] = s;
        m[(2 * j, 2 * j + 1)] = Complex64::new(-1.0, 0.0);
        m[(2 * j + 1, 2 * j)] = Complex64::new(gains.p, 0.0);
        m[(2 * j + 1, 2 * j + 1)] = s + gains.d;
        for k in 0..n {
            let w = c[(j, k)];
            if w != 0.0 {
                m[(2 * j + 1, 2 * k)] -= gains.p * w * e1;
                m[(2 * j + 1, 2 * k + 1)] -= gains.d * w * e2;
            }
        }
    }
    m.determinant()
}
