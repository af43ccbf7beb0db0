//! Topologies from JSON, and what happens without a spanning tree.

use ctcr_consensus::topology::{weighted_adjacency, DirectedTopology};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // agent 1 listens to 2, 2 to 3, 3 to 1: a directed ring
    let ring = DirectedTopology::parse(r#"{"n": 3, "edges": [[2, 1], [3, 2], [1, 3]]}"#)?;
    // two pairs that never talk to each other
    let split = DirectedTopology::parse(include_str!("../data/two_pairs.edges"))?;

    for (name, t) in [("ring", ring), ("two pairs", split)] {
        let adj = weighted_adjacency(&t)?;
        let values: Vec<String> = adj.spectrum.eigenvalues.iter().map(|e| format!("{:.3}{:+.3}i", e.value.re, e.value.im)).collect();
        println!(
            "{name}: spanning tree {}, unit multiplicity {}, spectrum [{}]",
            adj.spanning_tree,
            adj.spectrum.unit_multiplicity(),
            values.join(", ")
        );
    }

    match DirectedTopology::parse("n 2\n1 -> 1\n") {
        Ok(_) => println!("self loop accepted?"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
