//! Coarse stability map of the delay plane, printed as text, plus the
//! exact classification of a few delay pairs.

use ctcr_consensus::ctcr_map::{classify, stability_map, Classification, FactorCurves};
use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adj = weighted_adjacency(&five_agent_example())?;
    let factors = factorize(&adj, Gains::new(2.0, 0.8)?)?;
    let curves = factors.iter().map(|q| FactorCurves::compute(q, 5.0, 720)).collect::<Result<Vec<_>, _>>()?;

    let map = stability_map(&curves, 5.0, 0.1)?;
    println!("stable fraction {:.3} (τ2 up, τ1 right; # stable, . unstable, ~ marginal)", map.stable_fraction());
    for j in (0..map.cells).rev().step_by(2) {
        let row: String = (0..map.cells)
            .map(|i| match map.class[map.index(i, j)] {
                Classification::Stable => '#',
                Classification::Unstable => '.',
                Classification::Marginal => '~',
            })
            .collect();
        println!("  {row}");
    }

    for (name, p) in [("a", (0.5, 0.5)), ("b", (1.0, 2.5)), ("c", (1.3, 4.5)), ("d", (0.05, 0.8)), ("e", (0.1, 3.5))] {
        let (class, unstable) = classify(&curves, p.0, p.1)?;
        println!("{name} {p:?}: {} with {unstable} unstable roots", class.as_str());
    }
    Ok(())
}
