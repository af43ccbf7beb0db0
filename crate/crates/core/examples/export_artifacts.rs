//! Write the CSV and SVG artifacts for a coarse map, the delay-plane curves
//! and a short trajectory into a directory (first argument, default
//! `target/artifacts`).

use std::fs;
use std::path::PathBuf;

use ctcr_consensus::ctcr_map::{stability_map, FactorCurves};
use ctcr_consensus::dde_sim::{simulate, SimConfig};
use ctcr_consensus::factorization::{factorize, Gains};
use ctcr_consensus::topology::{five_agent_example, weighted_adjacency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("target/artifacts"), PathBuf::from);
    fs::create_dir_all(&dir)?;

    let adj = weighted_adjacency(&five_agent_example())?;
    let gains = Gains::new(2.0, 0.8)?;
    let factors = factorize(&adj, gains)?;
    let curves = factors.iter().map(|q| FactorCurves::compute(q, 5.0, 720)).collect::<Result<Vec<_>, _>>()?;

    for (k, f) in curves.iter().enumerate() {
        fs::write(dir.join(format!("curves_{k}.csv")), f.curves.to_csv())?;
    }
    let map = stability_map(&curves, 5.0, 0.05)?;
    fs::write(dir.join("map.csv"), map.to_csv())?;
    fs::write(dir.join("map.svg"), map.to_svg(&curves))?;

    let traj = simulate(&adj.matrix, gains, 0.5, 0.5, &SimConfig { t_end: 60.0, ..SimConfig::default() })?;
    fs::write(dir.join("trajectory.csv"), traj.to_csv())?;

    for entry in fs::read_dir(&dir)? {
        let entry = entry?;
        println!("{:>10} bytes  {}", entry.metadata()?.len(), entry.path().display());
    }
    Ok(())
}
