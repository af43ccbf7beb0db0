//! Trace the building curves of every factor and map them into the delay
//! plane as kernel and offspring curves.

use ctcr_consensus::ctcr_map::FactorCurves;
use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::sds_curves::residual_ok;
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adj = weighted_adjacency(&five_agent_example())?;
    let factors = factorize(&adj, Gains::new(2.0, 0.8)?)?;

    for q in &factors {
        let f = FactorCurves::compute(q, 5.0, 720)?;
        let points: Vec<_> = f.building.points().collect();
        let bad = points.iter().filter(|p| !residual_ok(q, p)).count();
        let (w_lo, w_hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.omega), hi.max(p.omega)));
        println!(
            "λ = {:.4}{:+.4}i: {} branches, {} points ({} off-curve), ω in [{:.3}, {:.3}]",
            q.lambda.re,
            q.lambda.im,
            f.building.branch_count(),
            points.len(),
            bad,
            w_lo,
            w_hi
        );
        println!(
            "  delay plane: {} kernel, {} offspring polylines, {} vertices",
            f.curves.kernel().count(),
            f.curves.offspring().count(),
            f.curves.vertex_count()
        );
    }
    Ok(())
}
