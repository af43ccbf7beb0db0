//! Pick how far to prolong the delays, starting from an unstable pair and
//! from a stable but slow one.

use ctcr_consensus::ctcr_map::{stability_map, FactorCurves};
use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::qpr_roots::{dominant_surface, DominantOptions};
use ctcr_consensus::scheduler::{default_margin, recommend_delays};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adj = weighted_adjacency(&five_agent_example())?;
    let factors = factorize(&adj, Gains::new(2.0, 0.8)?)?;
    let curves = factors.iter().map(|q| FactorCurves::compute(q, 5.0, 720)).collect::<Result<Vec<_>, _>>()?;

    // coarse rasters keep this quick; the CLI defaults to h = 0.02
    let h = 0.1;
    let map = stability_map(&curves, 5.0, h)?;
    let surface = dominant_surface(&factors, 5.0, h, DominantOptions::default())?;
    println!("surface cells without a root: {}", surface.missing());

    for current in [(1.0, 2.5), (0.5, 0.5)] {
        let rec = recommend_delays(&map, &surface, current, default_margin(&map))?;
        println!(
            "from {:?} ({}): go to ({:.2}, {:.2}), Re s_dom {:.4}, {:?}",
            current,
            rec.current_class.map_or("outside", |c| c.as_str()),
            rec.recommended.0,
            rec.recommended.1,
            rec.recommended_re,
            rec.rationale
        );
    }
    Ok(())
}
