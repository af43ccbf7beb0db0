//! Root tendencies along the delay axes and their invariance from a kernel
//! vertex to the offspring reached by prolonging the same delay by `2π/ω`.

use std::f64::consts::TAU;

use ctcr_consensus::ctcr_map::{axis_crossings, root_tendency, DelayIndex, FactorCurves};
use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adj = weighted_adjacency(&five_agent_example())?;
    let factors = factorize(&adj, Gains::new(2.0, 0.8)?)?;

    for q in &factors {
        println!("λ = {:.4}{:+.4}i", q.lambda.re, q.lambda.im);
        for axis in [DelayIndex::Tau1, DelayIndex::Tau2] {
            for c in axis_crossings(q, axis, 5.0)? {
                println!("  {axis:?} axis: τ = {:.4}, ω = {:.4}, RT {:+}", c.tau, c.omega, c.rt);
            }
        }
        let f = FactorCurves::compute(q, 5.0, 720)?;
        let first = f.curves.kernel().flat_map(|p| p.vertices.iter()).next().copied();
        if let Some(v) = first {
            let period = TAU / v.omega;
            let here = root_tendency(q, v.tau1, v.tau2, v.omega, DelayIndex::Tau1)?;
            let there = root_tendency(q, v.tau1 + period, v.tau2, v.omega, DelayIndex::Tau1)?;
            println!(
                "  kernel ({:.3}, {:.3}) RT1 {:+}, offspring ({:.3}, {:.3}) RT1 {:+}",
                v.tau1,
                v.tau2,
                here,
                v.tau1 + period,
                v.tau2,
                there
            );
        }
    }
    Ok(())
}
