//! Spectrum, spanning tree and characteristic factors of the five-agent
//! topology shipped in `data/`.
//!
//! ```bash
//! cargo run --example analyze_topology
//! ```

use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::topology::{weighted_adjacency, DirectedTopology};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topology = DirectedTopology::parse(include_str!("../data/five_agent.edges"))?;
    println!("agents: {}, in-degrees {:?}", topology.agent_count(), topology.in_degrees());

    let adj = weighted_adjacency(&topology)?;
    println!("spanning tree: {}", adj.spanning_tree);
    println!("eigenvalue 1 multiplicity: {}", adj.spectrum.unit_multiplicity());
    for e in &adj.spectrum.eigenvalues {
        println!("  {:>9.5} {:+.5}i  ({:?})", e.value.re, e.value.im, e.kind);
    }

    let factors = factorize(&adj, Gains::new(2.0, 0.8)?)?;
    for q in &factors {
        let free = q.delay_free_unstable_count()?;
        println!(
            "factor {:?} λ = {:.4}{:+.4}i, order {}, delay-free unstable {} marginal {}",
            q.kind, q.lambda.re, q.lambda.im, q.order, free.unstable, free.marginal
        );
    }
    Ok(())
}
