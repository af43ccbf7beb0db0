use ctcr_consensus::ctcr_map::{classify, stability_map, Classification, FactorCurves, PointCount};
use ctcr_consensus::factorization::{factorize, Gains, QuasiPolynomial};
use ctcr_consensus::qpr_roots::{factor_dominant_root, root_radius, winding_number, DominantOptions, Rect};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency, DirectedTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn five_agent_curves(resolution: usize) -> Vec<FactorCurves> {
    let adj = weighted_adjacency(&five_agent_example()).unwrap();
    let factors = factorize(&adj, Gains::new(2.0, 0.8).unwrap()).unwrap();
    factors.iter().map(|q| FactorCurves::compute(q, 5.0, resolution).unwrap()).collect()
}

/// Roots with `Re s > 0` by the argument principle; the structural root at
/// the origin stays outside because the contour starts just right of it.
fn open_rhp_count(q: &QuasiPolynomial, t1: f64, t2: f64) -> i64 {
    let r = root_radius(q, t1, t2, 0.0) + 0.5;
    winding_number(q, t1, t2, Rect { sigma_min: 1e-7, sigma_max: r, omega_min: -r, omega_max: r })
}

#[test]
fn counts_agree_with_argument_principle() {
    let curves = five_agent_curves(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 60 {
        let f = &curves[checked % curves.len()];
        let (t1, t2) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let dom = factor_dominant_root(&f.qp, t1, t2, DominantOptions::default()).unwrap();
        // near a curve the count is a coin toss
        if dom.s.re.abs() < 1e-3 && !(f.qp.is_centroid() && dom.s.norm() < 1e-9) {
            continue;
        }
        let PointCount::Count(nu) = f.unstable_count(t1, t2).unwrap() else { continue };
        assert_eq!(nu as i64, open_rhp_count(&f.qp, t1, t2), "λ = {} at ({t1}, {t2})", f.qp.lambda);
        checked += 1;
    }
}

fn intersects(p: (f64, f64), q: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let orient = |a: (f64, f64), b: (f64, f64), x: (f64, f64)| ((b.0 - a.0) * (x.1 - a.1) - (b.1 - a.1) * (x.0 - a.0)).signum();
    orient(p, q, c) * orient(p, q, d) <= 0.0 && orient(c, d, p) * orient(c, d, q) <= 0.0
}

#[test]
fn crossing_a_curve_moves_two_roots() {
    let curves = five_agent_curves(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let delta = 2e-3;
    let mut checked = 0;
    for f in &curves {
        let segments: Vec<_> = f.curves.segments().collect();
        for _ in 0..15 {
            let (a, b) = segments[rng.random_range(0..segments.len())];
            let (dx, dy) = (b.tau1 - a.tau1, b.tau2 - a.tau2);
            let len = dx.hypot(dy);
            if len < 1e-9 {
                continue;
            }
            let (mx, my) = (0.5 * (a.tau1 + b.tau1), 0.5 * (a.tau2 + b.tau2));
            let (nx, ny) = (-dy / len * delta, dx / len * delta);
            let (p, q) = ((mx + nx, my + ny), (mx - nx, my - ny));
            if [p, q].iter().any(|&(x, y)| x < 0.0 || y < 0.0 || x > 5.0 || y > 5.0) {
                continue;
            }
            let (PointCount::Count(u), PointCount::Count(v)) = (f.unstable_count(p.0, p.1).unwrap(), f.unstable_count(q.0, q.1).unwrap())
            else {
                continue;
            };
            // the probe must cross this factor's curves exactly once
            let crossings = f.curves.segments().filter(|(c, d)| intersects(p, q, (c.tau1, c.tau2), (d.tau1, d.tau2))).count();
            if crossings != 1 {
                continue;
            }
            assert_eq!((u as i64 - v as i64).abs(), 2, "λ = {} across ({mx}, {my}): {u} vs {v}", f.qp.lambda);
            checked += 1;
        }
    }
    assert!(checked >= 30, "{checked}");
}

#[test]
fn reference_points_and_origin() {
    let curves = five_agent_curves(1000);
    let class = |t1, t2| classify(&curves, t1, t2).unwrap();
    assert_eq!(class(0.5, 0.5).0, Classification::Stable);
    assert_eq!(class(1.0, 2.5), (Classification::Unstable, 6));
    assert_eq!(class(1.3, 4.5).0, Classification::Stable);
    assert_eq!(class(0.05, 0.8).0, Classification::Stable);
    assert_eq!(class(0.1, 3.5).0, Classification::Stable);

    let map = stability_map(&curves, 5.0, 0.1).unwrap();
    assert_eq!(map.class[map.index(0, 0)], Classification::Stable);
    assert!(map.consensus_possible);
    assert!((map.stable_fraction() - 0.25).abs() < 0.02, "{}", map.stable_fraction());
}

#[test]
fn relabelling_agents_leaves_the_map_unchanged() {
    let base = five_agent_example();
    // agent k becomes perm[k]
    let perm = [3, 5, 1, 2, 4];
    let edges: Vec<_> = base.edges().into_iter().map(|(a, b)| (perm[a - 1], perm[b - 1])).collect();
    let relabelled = DirectedTopology::from_edges(5, &edges).unwrap();
    let gains = Gains::new(2.0, 0.8).unwrap();
    let map_of = |t: &DirectedTopology| {
        let adj = weighted_adjacency(t).unwrap();
        let curves: Vec<_> = factorize(&adj, gains).unwrap().iter().map(|q| FactorCurves::compute(q, 5.0, 720).unwrap()).collect();
        stability_map(&curves, 5.0, 0.1).unwrap()
    };
    let (m1, m2) = (map_of(&base), map_of(&relabelled));
    let differ = m1.class.iter().zip(&m2.class).filter(|(a, b)| a != b).count();
    assert_eq!(differ, 0);
    assert_eq!(m1.nu_total, m2.nu_total);
}

#[test]
fn split_topology_cannot_agree() {
    let t = DirectedTopology::parse(include_str!("../data/two_pairs.edges")).unwrap();
    let adj = weighted_adjacency(&t).unwrap();
    let factors = factorize(&adj, Gains::new(2.0, 0.8).unwrap()).unwrap();
    let curves: Vec<_> = factors.iter().map(|q| FactorCurves::compute(q, 2.0, 720).unwrap()).collect();
    let map = stability_map(&curves, 2.0, 0.1).unwrap();
    assert!(!map.consensus_possible);
}
