//! Command-line front end: `analyze`, `curves`, `map`, `domroot`, `simulate`
//! and `schedule`. Artifacts go to `--out`, a summary to stdout, and every
//! run leaves a `manifest.json` listing parameters, outputs and stage times.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ctcr_map::{classify, stability_map, Classification, FactorCurves};
use crate::dde_sim::{consensus_metrics, simulate, SimConfig};
use crate::factorization::{factorize, FactorError, Gains, ModalTransform, QuasiPolynomial};
use crate::qpr_roots::{dominant_root, dominant_surface, DominantOptions};
use crate::scheduler::{default_margin, recommend_delays, ScheduleError};
use crate::sds_curves::{sig12, DEFAULT_RESOLUTION};
use crate::svg::{Svg, SvgStyle};
use crate::topology::{five_agent_example, weighted_adjacency, DirectedTopology, EigenKind, TopologyError, WeightedAdjacency};

#[derive(Debug, Parser)]
#[command(name = "ctcr", version, about = "Delay-plane stability, consensus speed and delay scheduling for delayed PD consensus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Spectrum, spanning tree and factor report.
    Analyze,
    /// Building curves and kernel/offspring curves per factor.
    Curves,
    /// Stability map over [0, τ_max]².
    Map,
    /// Dominant root surface (and the root at --tau1/--tau2 if given).
    Domroot,
    /// Simulate the swarm at --tau1/--tau2.
    Simulate,
    /// Recommend prolonged delays starting from --tau1/--tau2.
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Options {
    /// Edge-list or JSON topology; the built-in five-agent topology if omitted.
    #[arg(long, global = true)]
    pub topology: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, global = true, default_value_t = 0.8)]
    pub d: f64,
    #[arg(long = "tau-max", global = true, default_value_t = 5.0)]
    pub tau_max: f64,
    /// Raster step h.
    #[arg(long, global = true, default_value_t = 0.02)]
    pub grid: f64,
    /// Grid points per axis of the spectral-delay building block.
    #[arg(long, global = true, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
    #[arg(long, global = true)]
    pub tau1: Option<f64>,
    #[arg(long, global = true)]
    pub tau2: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Artifact formats, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_value = "csv,json,svg")]
    pub format: Vec<Format>,
    /// Seed for random initial positions.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Simulation horizon in seconds.
    #[arg(long = "t-end", global = true, default_value_t = 200.0)]
    pub t_end: f64,
}

/// Error with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn numeric(message: impl std::fmt::Display) -> Self {
        Self { code: 2, message: message.to_string() }
    }
}

impl From<TopologyError> for Failure {
    fn from(e: TopologyError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<FactorError> for Failure {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::InvalidGains { .. } => Failure::input(e.to_string()),
            _ => Failure::numeric(e),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: Command,
    pub topology: String,
    pub parameters: Options,
    pub output_dir: String,
    pub outputs: Vec<String>,
    pub stages: Vec<Stage>,
}

struct Run {
    cli: Cli,
    manifest: RunManifest,
    summary: String,
}

impl Run {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.manifest.stages.push(Stage { name: name.to_string(), seconds: t.elapsed().as_secs_f64() });
        out
    }

    fn wants(&self, f: Format) -> bool {
        self.cli.opts.format.contains(&f)
    }

    /// Writes through a temporary file and a rename.
    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.cli.opts.out.join(name);
        write_atomic(&path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn say(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }
}

pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = std::env::var("CTCR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match execute(cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Runs a parsed command; returns the stdout summary.
pub fn execute(cli: Cli) -> Result<String, Failure> {
    let o = &cli.opts;
    validate(o)?;
    let topology_name = o.topology.as_ref().map_or_else(|| "<built-in five-agent>".to_string(), |p| p.display().to_string());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command,
        topology: topology_name,
        parameters: o.clone(),
        output_dir: o.out.display().to_string(),
        outputs: Vec::new(),
        stages: Vec::new(),
    };
    std::fs::create_dir_all(&o.out).map_err(|e| Failure::input(format!("cannot create {}: {e}", o.out.display())))?;
    let mut run = Run { cli, manifest, summary: String::new() };

    let topology = match &run.cli.opts.topology {
        Some(path) => DirectedTopology::load(path)?,
        None => five_agent_example(),
    };
    let gains = Gains::new(run.cli.opts.p, run.cli.opts.d)?;
    let adj = run.stage("spectrum", || weighted_adjacency(&topology)).map_err(Failure::numeric)?;
    let factors = run.stage("factorize", || factorize(&adj, gains))?;

    match run.cli.command {
        Command::Analyze => analyze(&mut run, &topology, &adj, &factors)?,
        Command::Curves => {
            let fc = curves_stage(&mut run, &factors)?;
            write_curves(&mut run, &fc)?;
        }
        Command::Map => map_command(&mut run, &factors)?,
        Command::Domroot => domroot_command(&mut run, &factors)?,
        Command::Simulate => simulate_command(&mut run, &adj, gains)?,
        Command::Schedule => schedule_command(&mut run, &factors)?,
    }
    let json = serde_json::to_string_pretty(&run.manifest).expect("manifest serializes");
    let path = run.cli.opts.out.join("manifest.json");
    write_atomic(&path, &json).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(run.summary)
}

fn validate(o: &Options) -> Result<(), Failure> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(o.tau_max) {
        return Err(Failure::input(format!("--tau-max must be positive, got {}", o.tau_max)));
    }
    if !positive(o.grid) || o.grid > o.tau_max {
        return Err(Failure::input(format!("--grid must be in (0, tau-max], got {}", o.grid)));
    }
    if o.resolution < crate::sds_curves::MIN_RESOLUTION {
        return Err(Failure::input(format!("--resolution must be at least {}", crate::sds_curves::MIN_RESOLUTION)));
    }
    for (name, v) in [("--tau1", o.tau1), ("--tau2", o.tau2)] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Failure::input(format!("{name} must be nonnegative, got {v}")));
            }
        }
    }
    if !positive(o.t_end) {
        return Err(Failure::input(format!("--t-end must be positive, got {}", o.t_end)));
    }
    Ok(())
}

fn point(o: &Options) -> Result<(f64, f64), Failure> {
    match (o.tau1, o.tau2) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Failure::input("this command needs --tau1 and --tau2")),
    }
}

fn analyze(run: &mut Run, topology: &DirectedTopology, adj: &WeightedAdjacency, factors: &[QuasiPolynomial]) -> Result<(), Failure> {
    run.say(format!("agents: {}", topology.agent_count()));
    run.say(format!("in-degrees: {:?}", topology.in_degrees()));
    run.say(format!("spanning tree: {}", if adj.spanning_tree { "yes" } else { "no" }));
    run.say("eigenvalues:");
    let mut csv = String::from("re,im,kind\n");
    for e in &adj.spectrum.eigenvalues {
        let kind = match e.kind {
            EigenKind::Real => "real",
            EigenKind::PairUpper | EigenKind::PairLower => "complex",
        };
        let _ = writeln!(csv, "{},{},{kind}", sig12(e.value.re), sig12(e.value.im));
        if e.kind == EigenKind::Real {
            run.say(format!("  {:.5}", e.value.re));
        } else if e.kind == EigenKind::PairUpper {
            run.say(format!("  {:.5} ± {:.5}i", e.value.re, e.value.im));
        }
    }
    run.say("factors:");
    let mut counts = Vec::new();
    for q in factors {
        let c = q.delay_free_unstable_count().map_err(Failure::numeric)?;
        run.say(format!(
            "  λ = {:.5}{:+.5}i  order {}  {:?}  delay-free unstable {} marginal {}",
            q.lambda.re, q.lambda.im, q.order, q.kind, c.unstable, c.marginal
        ));
        counts.push(c);
    }
    if run.wants(Format::Csv) {
        run.write("spectrum.csv", &csv)?;
    }
    if run.wants(Format::Json) {
        let doc = serde_json::json!({
            "agents": topology.agent_count(),
            "in_degrees": topology.in_degrees(),
            "spanning_tree": adj.spanning_tree,
            "weighted_adjacency": adj.matrix.rows(),
            "spectrum": adj.spectrum,
            "factors": factors,
            "delay_free_counts": counts,
        });
        run.write("analyze.json", &serde_json::to_string_pretty(&doc).expect("serializes"))?;
    }
    Ok(())
}

fn curves_stage(run: &mut Run, factors: &[QuasiPolynomial]) -> Result<Vec<FactorCurves>, Failure> {
    let (tau_max, res) = (run.cli.opts.tau_max, run.cli.opts.resolution);
    let mut out = Vec::with_capacity(factors.len());
    for (k, q) in factors.iter().enumerate() {
        let fc = run.stage(&format!("curves[{k}]"), || FactorCurves::compute(q, tau_max, res)).map_err(Failure::numeric)?;
        out.push(fc);
    }
    Ok(out)
}

fn write_curves(run: &mut Run, fc: &[FactorCurves]) -> Result<(), Failure> {
    for (k, f) in fc.iter().enumerate() {
        run.say(format!(
            "factor {k} (λ = {:.5}{:+.5}i): {} building branches, {} delay-plane polylines, {} vertices",
            f.qp.lambda.re,
            f.qp.lambda.im,
            f.building.branch_count(),
            f.curves.polylines.len(),
            f.curves.vertex_count()
        ));
    }
    if run.wants(Format::Csv) {
        let mut csv = String::new();
        for (k, f) in fc.iter().enumerate() {
            for (n, line) in f.curves.to_csv().lines().enumerate() {
                if n == 0 {
                    if k == 0 {
                        let _ = writeln!(csv, "factor,{line}");
                    }
                } else {
                    let _ = writeln!(csv, "{k},{line}");
                }
            }
        }
        run.write("curves.csv", &csv)?;
    }
    if run.wants(Format::Svg) {
        let tau_max = run.cli.opts.tau_max;
        let mut plane = Svg::new(tau_max, tau_max, "τ1 [s]", "τ2 [s]");
        let two_pi = std::f64::consts::TAU;
        let mut sds = Svg::new(two_pi, two_pi, "ν1 [rad]", "ν2 [rad]");
        for (k, f) in fc.iter().enumerate() {
            let style = SvgStyle::palette(k);
            for line in &f.curves.polylines {
                let pts: Vec<_> = line.vertices.iter().map(|v| (v.tau1, v.tau2)).collect();
                plane.polyline(&pts, style);
            }
            for line in &f.building.polylines {
                let pts: Vec<_> = line.iter().map(|p| (p.nu1, p.nu2)).collect();
                sds.polyline(&pts, style);
            }
        }
        run.write("curves.svg", &plane.finish())?;
        run.write("sds.svg", &sds.finish())?;
    }
    if run.wants(Format::Json) {
        let diag: Vec<_> = fc
            .iter()
            .map(|f| {
                serde_json::json!({
                    "lambda": f.qp.lambda,
                    "branches": f.building.branch_count(),
                    "diagnostics": f.building.diagnostics,
                    "tau1_axis": f.tau1_axis,
                    "tau2_axis": f.tau2_axis,
                    "dropped_low_frequency": f.curves.dropped_low_frequency,
                })
            })
            .collect();
        run.write("curves.json", &serde_json::to_string_pretty(&diag).expect("serializes"))?;
    }
    Ok(())
}

fn map_command(run: &mut Run, factors: &[QuasiPolynomial]) -> Result<(), Failure> {
    let fc = curves_stage(run, factors)?;
    let (tau_max, h) = (run.cli.opts.tau_max, run.cli.opts.grid);
    let map = run.stage("map", || stability_map(&fc, tau_max, h)).map_err(Failure::numeric)?;
    run.say(format!("{0}×{0} cells, stable fraction {1:.4}", map.cells, map.stable_fraction()));
    if !map.consensus_possible {
        run.say("eigenvalue 1 is repeated: consensus is impossible for every delay pair");
    }
    let mut probe = None;
    if let (Some(t1), Some(t2)) = (run.cli.opts.tau1, run.cli.opts.tau2) {
        let (class, nu) = classify(&fc, t1, t2).map_err(Failure::numeric)?;
        run.say(format!("({t1}, {t2}): {} with {nu} unstable roots", class.as_str()));
        probe = Some((t1, t2, class, nu));
    }
    if run.wants(Format::Csv) {
        run.write("map.csv", &map.to_csv())?;
    }
    if run.wants(Format::Svg) {
        run.write("map.svg", &map.to_svg(&fc))?;
    }
    if run.wants(Format::Json) {
        let doc = serde_json::json!({
            "tau_max": map.tau_max,
            "h": map.h,
            "cells": map.cells,
            "stable_fraction": map.stable_fraction(),
            "consensus_possible": map.consensus_possible,
            "point": probe.map(|(t1, t2, c, nu)| serde_json::json!({"tau1": t1, "tau2": t2, "class": c, "nu_total": nu})),
        });
        run.write("map.json", &serde_json::to_string_pretty(&doc).expect("serializes"))?;
    }
    Ok(())
}

fn domroot_command(run: &mut Run, factors: &[QuasiPolynomial]) -> Result<(), Failure> {
    let opts = DominantOptions::default();
    let mut point_json = serde_json::Value::Null;
    if let (Some(t1), Some(t2)) = (run.cli.opts.tau1, run.cli.opts.tau2) {
        let r = run.stage("dominant-root", || dominant_root(factors, t1, t2, opts)).map_err(Failure::numeric)?;
        run.say(format!(
            "({t1}, {t2}): s_dom = {:.6}{:+.6}i (factor {}), time constant {:.4} s",
            r.s.re,
            r.s.im,
            r.factor,
            -1.0 / r.s.re
        ));
        point_json = serde_json::json!({"tau1": t1, "tau2": t2, "re": r.s.re, "im": r.s.im, "factor": r.factor});
    }
    let (tau_max, h) = (run.cli.opts.tau_max, run.cli.opts.grid);
    let surface = run.stage("surface", || dominant_surface(factors, tau_max, h, opts)).map_err(Failure::numeric)?;
    run.say(format!("{0}×{0} cells, {1} missing", surface.cells, surface.missing()));
    if run.wants(Format::Csv) {
        run.write("domroot.csv", &surface.to_csv())?;
    }
    if run.wants(Format::Svg) {
        run.write("domroot.svg", &surface.to_svg())?;
    }
    if run.wants(Format::Json) {
        let best = surface.roots.iter().enumerate().filter_map(|(k, r)| r.map(|r| (k, r))).min_by(|a, b| a.1.s.re.total_cmp(&b.1.s.re));
        let doc = serde_json::json!({
            "tau_max": surface.tau_max,
            "h": surface.h,
            "missing": surface.missing(),
            "fastest": best.map(|(k, r)| {
                let (x, y) = surface.center(k % surface.cells, k / surface.cells);
                serde_json::json!({"tau1": x, "tau2": y, "re": r.s.re})
            }),
            "point": point_json,
        });
        run.write("domroot.json", &serde_json::to_string_pretty(&doc).expect("serializes"))?;
    }
    Ok(())
}

fn simulate_command(run: &mut Run, adj: &WeightedAdjacency, gains: Gains) -> Result<(), Failure> {
    let (t1, t2) = point(&run.cli.opts)?;
    let config = SimConfig { t_end: run.cli.opts.t_end, seed: run.cli.opts.seed, ..SimConfig::default() };
    let traj = run.stage("simulate", || simulate(&adj.matrix, gains, t1, t2, &config)).map_err(Failure::numeric)?;
    let modal = ModalTransform::new(adj).ok();
    let metrics = consensus_metrics(&traj, modal.as_ref());
    run.say(format!("outcome: {:?}", metrics.outcome));
    run.say(format!("spread: initial {:.4}, final {:.4e}", metrics.initial_spread, metrics.final_spread));
    match metrics.settling_time {
        Some(t) => run.say(format!("settling time (2%): {t:.2} s")),
        None => run.say("settling time (2%): not reached"),
    }
    if let Some(v) = metrics.consensus_value {
        run.say(format!("consensus value: {v:.6}"));
    }
    if run.wants(Format::Csv) {
        run.write("trajectory.csv", &traj.to_csv())?;
    }
    if run.wants(Format::Json) {
        let mut m = serde_json::to_value(&metrics).expect("serializes");
        if let Some(obj) = m.as_object_mut() {
            // the spread series is already in the trajectory
            obj.remove("spread");
        }
        run.write("metrics.json", &serde_json::to_string_pretty(&m).expect("serializes"))?;
        run.write("config.json", &serde_json::to_string_pretty(&config).expect("serializes"))?;
    }
    if run.wants(Format::Svg) {
        let t_max = traj.times.last().copied().unwrap_or(1.0);
        let lim = traj.positions.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-9);
        let mut svg = Svg::new(t_max, 2.0 * lim, "t [s]", "x + max|x|");
        for j in 0..traj.agents() {
            let pts: Vec<_> = traj.times.iter().zip(&traj.positions).map(|(t, x)| (*t, x[j] + lim)).collect();
            svg.polyline(&pts, SvgStyle::palette(j));
        }
        run.write("trajectory.svg", &svg.finish())?;
    }
    Ok(())
}

fn schedule_command(run: &mut Run, factors: &[QuasiPolynomial]) -> Result<(), Failure> {
    let current = point(&run.cli.opts)?;
    let fc = curves_stage(run, factors)?;
    let (tau_max, h) = (run.cli.opts.tau_max, run.cli.opts.grid);
    let map = run.stage("map", || stability_map(&fc, tau_max, h)).map_err(Failure::numeric)?;
    let opts = DominantOptions::default();
    let surface = run.stage("surface", || dominant_surface(factors, tau_max, h, opts)).map_err(Failure::numeric)?;
    let rec = match recommend_delays(&map, &surface, current, default_margin(&map)) {
        Ok(r) => r,
        Err(e @ ScheduleError::NoStabilizingProlongation) => return Err(Failure::numeric(e)),
        Err(e) => return Err(Failure::input(e.to_string())),
    };
    let class = rec.current_class.map_or("outside the map", Classification::as_str);
    run.say(format!("current ({}, {}): {class}", current.0, current.1));
    run.say(format!(
        "recommended ({:.4}, {:.4}): Re s_dom = {:.5} [{:?}]",
        rec.recommended.0, rec.recommended.1, rec.recommended_re, rec.rationale
    ));
    if run.wants(Format::Json) || run.wants(Format::Csv) {
        run.write("schedule.json", &rec.to_json())?;
    }
    Ok(())
}
