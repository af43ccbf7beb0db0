//! All roots in a rectangle of the complex plane, checked against the
//! argument principle. Roots below the real axis are reported by their
//! conjugates, so the rectangle covers the upper half plane only.

use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::qpr_roots::{default_step, root_radius, roots_in_rectangle, winding_number, Rect};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adj = weighted_adjacency(&five_agent_example())?;
    let factors = factorize(&adj, Gains::new(2.0, 0.8)?)?;
    let (t1, t2) = (1.0, 2.5);

    for q in &factors {
        let radius = root_radius(q, t1, t2, 0.0);
        // closed right half plane, upper half, cut by the bound every root
        // there obeys; the thin margins keep roots at 0 off the contour
        let region = Rect { sigma_min: -0.05, sigma_max: radius, omega_min: -0.05, omega_max: radius };
        let scan = roots_in_rectangle(q, t1, t2, region, default_step(t1, t2))?;
        let winding = winding_number(q, t1, t2, region);
        println!(
            "λ = {:.3}{:+.3}i: radius {radius:.3}, {} roots found, winding number {winding}",
            q.lambda.re,
            q.lambda.im,
            scan.roots.len()
        );
        for r in &scan.roots {
            println!("    {:.6}{:+.6}i  |q| = {:.1e}", r.s.re, r.s.im, r.residual);
        }
    }
    Ok(())
}
