//! Rightmost characteristic root at a few delay pairs, per factor and for
//! the whole system, and the consensus speed it implies.

use ctcr_consensus::qpr_roots::{dominant_root, factor_dominant_root, DominantOptions};
use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adj = weighted_adjacency(&five_agent_example())?;
    let factors = factorize(&adj, Gains::new(2.0, 0.8)?)?;
    let opts = DominantOptions::default();

    for (name, (t1, t2)) in [("a", (0.5, 0.5)), ("b", (1.0, 2.5)), ("d", (0.05, 0.8)), ("e", (0.1, 3.5))] {
        let dom = dominant_root(&factors, t1, t2, opts)?;
        println!("{name} ({t1}, {t2}): s_dom = {:.4}{:+.4}i from factor {}", dom.s.re, dom.s.im, dom.factor);
        for q in &factors {
            let r = factor_dominant_root(q, t1, t2, opts)?;
            println!("    λ = {:.3}{:+.3}i: {:.4}{:+.4}i{}", q.lambda.re, q.lambda.im, r.s.re, r.s.im, if r.multiple { " (multiple)" } else { "" });
        }
        if dom.s.re < 0.0 {
            println!("  disagreement decays like e^({:.4} t), time constant {:.1} s", dom.s.re, -1.0 / dom.s.re);
        }
    }
    Ok(())
}
