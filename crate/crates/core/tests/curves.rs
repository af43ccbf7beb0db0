use ctcr_consensus::factorization::{Gains, QuasiPolynomial};
use ctcr_consensus::sds_curves::{kernel_and_offspring, residual_ok, trace_building_curves};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_factors_trace_onto_the_imaginary_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..12 {
        let g = Gains::new(rng.random_range(0.5..3.0), rng.random_range(0.3..2.0)).unwrap();
        let q = if rng.random_bool(0.5) {
            QuasiPolynomial::real(rng.random_range(-1.0..1.0), g)
        } else {
            QuasiPolynomial::complex_pair(Complex64::new(rng.random_range(-0.9..0.6), rng.random_range(0.1..0.7)), g)
        };
        let b = trace_building_curves(&q, 400).unwrap();
        assert!(b.branch_count() <= q.order * q.order, "{} branches for order {}", b.branch_count(), q.order);
        for p in b.points() {
            assert!(residual_ok(&q, p), "{p:?} off the curve of {q:?}");
            assert!(p.omega > 0.0);
            let s = Complex64::new(0.0, p.omega);
            let value = q.evaluate(s, p.nu1 / p.omega, p.nu2 / p.omega);
            let scale: f64 = q.terms.iter().map(|t| t.poly_at(s).norm()).sum();
            assert!(value.norm() < 1e-8 * scale.max(1.0));
        }
        let plane = kernel_and_offspring(&q, &b, 4.0).unwrap();
        for (v, w) in plane.segments() {
            // segments reaching into the box are kept whole
            assert!(v.tau1 >= 0.0 && v.tau2 >= 0.0);
            assert!(v.tau1.min(w.tau1) <= 4.0 && v.tau2.min(w.tau2) <= 4.0);
            let value = q.evaluate(Complex64::new(0.0, v.omega), v.tau1, v.tau2);
            let scale: f64 = q.terms.iter().map(|t| t.poly_at(Complex64::new(0.0, v.omega)).norm()).sum();
            assert!(value.norm() < 1e-7 * scale.max(1.0), "{v:?}: {value}");
        }
    }
}

/// Squared distance from `p` to the segment `ab`.
fn distance2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (x, y) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    x * x + y * y
}

#[test]
fn no_crossing_is_missed_away_from_the_curves() {
    use ctcr_consensus::ctcr_map::FactorCurves;
    use ctcr_consensus::factorization::factorize;
    use ctcr_consensus::qpr_roots::{root_radius, winding_number, Rect};
    use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

    let adj = weighted_adjacency(&five_agent_example()).unwrap();
    let factors = factorize(&adj, Gains::new(2.0, 0.8).unwrap()).unwrap();
    let curves: Vec<_> = factors.iter().map(|q| FactorCurves::compute(q, 5.0, 2000).unwrap()).collect();
    let segments: Vec<((f64, f64), (f64, f64))> = curves
        .iter()
        .flat_map(|f| f.curves.segments().map(|(a, b)| ((a.tau1, a.tau2), (b.tau1, b.tau2))))
        .collect();
    // cell diagonal of the standard 0.02 raster
    let clearance2 = 2.0 * 0.02f64.powi(2);

    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut checked = 0;
    while checked < 10_000 {
        let p = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        if segments.iter().any(|&(a, b)| distance2(p, a, b) < clearance2) {
            continue;
        }
        for q in &factors {
            let r = root_radius(q, p.0, p.1, -1e-4) + 0.1;
            // the strip starts above the structural root at the origin
            let strip = Rect { sigma_min: -1e-4, sigma_max: 1e-4, omega_min: 1e-3, omega_max: r };
            assert_eq!(winding_number(q, p.0, p.1, strip), 0, "λ = {} at {p:?}", q.lambda);
        }
        checked += 1;
    }
}
