//! Fixed-step simulation of the delayed PD swarm
//!
//! `ẍ_j = P(Σ_k x_k(t-τ1)/δ_j - x_j) + D(Σ_k ẋ_k(t-τ2)/δ_j - ẋ_j)`
//!
//! by classical RK4. Delayed states come from cubic Hermite interpolation of
//! the stored step history (positions with velocity slopes, velocities with
//! acceleration slopes). The pre-history is constant.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factorization::{Gains, ModalTransform};
use crate::linalg::RealMatrix;
use crate::sds_curves::sig12;

/// A run is cut short once any state exceeds this magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e9;
/// Settling band, relative to the initial spread.
pub const SETTLING_FRACTION: f64 = 0.02;
/// Final relative spread below which the swarm is in consensus.
pub const CONSENSUS_SPREAD: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step {dt} exceeds the limit {limit} for these delays")]
    Step { dt: f64, limit: f64 },
    #[error("delays must be nonnegative and finite, got ({tau1}, {tau2})")]
    Delay { tau1: f64, tau2: f64 },
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("history has {got} agents, topology has {expected}")]
    History { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration step; `None` picks the largest admissible step.
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Constant pre-history `(position, velocity)` per agent; `None` draws
    /// positions uniformly from `[-5, 5]` with zero velocities.
    pub history: Option<Vec<(f64, f64)>>,
    pub seed: u64,
    /// Spacing of recorded samples (rounded to a whole number of steps).
    pub output_step: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: None, t_end: 100.0, history: None, seed: 0, output_step: 0.05 }
    }
}

/// Largest admissible step: a tenth of the smallest positive delay (at most
/// 0.05), or 0.005 without delays.
pub fn max_step(tau1: f64, tau2: f64) -> f64 {
    let positive = [tau1, tau2].into_iter().filter(|t| *t > 0.0).fold(0.05_f64, f64::min);
    if tau1 > 0.0 || tau2 > 0.0 {
        positive / 10.0
    } else {
        0.005
    }
}

impl SimConfig {
    /// The pre-history this configuration produces for `n` agents.
    pub fn initial_history(&self, n: usize) -> Vec<(f64, f64)> {
        match &self.history {
            Some(h) => h.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..n).map(|_| (rng.random_range(-5.0..=5.0), 0.0)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Stopped early because a state exceeded [`DIVERGENCE_LIMIT`].
    pub diverged: bool,
}

impl Trajectory {
    pub fn agents(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// CSV rows `t,x1..xn,xdot1..xdotn`.
    pub fn to_csv(&self) -> String {
        let n = self.agents();
        let mut out = String::from("t");
        for j in 1..=n {
            let _ = write!(out, ",x{j}");
        }
        for j in 1..=n {
            let _ = write!(out, ",xdot{j}");
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&sig12(*t));
            for v in self.positions[k].iter().chain(&self.velocities[k]) {
                out.push(',');
                out.push_str(&sig12(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Modal coordinates `ξ = T⁻¹ x` of the positions at sample `k`.
    pub fn modal_positions(&self, modal: &ModalTransform, k: usize) -> Vec<f64> {
        modal.modal(&self.positions[k])
    }
}

/// Step history with Hermite interpolation.
struct History {
    dt: f64,
    x0: Vec<f64>,
    v0: Vec<f64>,
    x: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

impl History {
    /// Positions and velocities at time `t ≤` the last stored node.
    fn at(&self, t: f64, want_x: bool, out_x: &mut [f64], out_v: &mut [f64]) {
        if t <= 0.0 {
            out_x.copy_from_slice(&self.x0);
            out_v.copy_from_slice(&self.v0);
            return;
        }
        let last = self.x.len() - 1;
        let pos = t / self.dt;
        let k = (pos.floor() as usize).min(last.saturating_sub(1));
        let u = (pos - k as f64).clamp(0.0, 1.0);
        if u == 0.0 || last == 0 {
            out_x.copy_from_slice(&self.x[k]);
            out_v.copy_from_slice(&self.v[k]);
            return;
        }
        let h = self.dt;
        let (h00, h10, h01, h11) = hermite(u);
        for j in 0..out_v.len() {
            if want_x {
                out_x[j] = h00 * self.x[k][j] + h10 * h * self.v[k][j] + h01 * self.x[k + 1][j] + h11 * h * self.v[k + 1][j];
            }
            out_v[j] = h00 * self.v[k][j] + h10 * h * self.a[k][j] + h01 * self.v[k + 1][j] + h11 * h * self.a[k + 1][j];
        }
    }
}

fn hermite(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2)
}

struct Rhs<'a> {
    c: &'a RealMatrix,
    gains: Gains,
    tau1: f64,
    tau2: f64,
    scratch_x: Vec<f64>,
    scratch_v: Vec<f64>,
    delayed_x: Vec<f64>,
    delayed_v: Vec<f64>,
}

impl Rhs<'_> {
    /// Acceleration at time `t` for current `(x, v)`; a zero delay reads the
    /// current state.
    fn accel(&mut self, hist: &History, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = x.len();
        if self.tau1 > 0.0 {
            hist.at(t - self.tau1, true, &mut self.scratch_x, &mut self.scratch_v);
            self.delayed_x.copy_from_slice(&self.scratch_x);
        } else {
            self.delayed_x.copy_from_slice(x);
        }
        if self.tau2 > 0.0 {
            hist.at(t - self.tau2, false, &mut self.scratch_x, &mut self.scratch_v);
            self.delayed_v.copy_from_slice(&self.scratch_v);
        } else {
            self.delayed_v.copy_from_slice(v);
        }
        let Gains { p, d } = self.gains;
        for j in 0..n {
            let row = self.c.row(j);
            let mut cx = 0.0;
            let mut cv = 0.0;
            for k in 0..n {
                cx += row[k] * self.delayed_x[k];
                cv += row[k] * self.delayed_v[k];
            }
            out[j] = p * (cx - x[j]) + d * (cv - v[j]);
        }
    }
}

/// Integrates the swarm over `[0, t_end]`. `c` is the weighted adjacency matrix.
pub fn simulate(c: &RealMatrix, gains: Gains, tau1: f64, tau2: f64, config: &SimConfig) -> Result<Trajectory, SimError> {
    if !(tau1 >= 0.0 && tau2 >= 0.0 && tau1.is_finite() && tau2.is_finite()) {
        return Err(SimError::Delay { tau1, tau2 });
    }
    if !(config.t_end > 0.0 && config.t_end.is_finite()) {
        return Err(SimError::Horizon(config.t_end));
    }
    let limit = max_step(tau1, tau2);
    let dt = config.dt.unwrap_or(limit);
    if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(SimError::Step { dt, limit });
    }
    let n = c.dim();
    let init = config.initial_history(n);
    if init.len() != n {
        return Err(SimError::History { got: init.len(), expected: n });
    }
    let x0: Vec<f64> = init.iter().map(|h| h.0).collect();
    let v0: Vec<f64> = init.iter().map(|h| h.1).collect();
    let steps = (config.t_end / dt).round().max(1.0) as usize;
    let stride = ((config.output_step / dt).round() as usize).max(1);

    let mut rhs = Rhs {
        c,
        gains,
        tau1,
        tau2,
        scratch_x: vec![0.0; n],
        scratch_v: vec![0.0; n],
        delayed_x: vec![0.0; n],
        delayed_v: vec![0.0; n],
    };
    let mut hist = History { dt, x0: x0.clone(), v0: v0.clone(), x: vec![x0.clone()], v: vec![v0.clone()], a: Vec::new() };
    let mut a0 = vec![0.0; n];
    rhs.accel(&hist, 0.0, &x0, &v0, &mut a0);
    hist.a.push(a0);

    let mut traj = Trajectory { dt, times: vec![0.0], positions: vec![x0], velocities: vec![v0], diverged: false };
    let mut kx = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut kv = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut xs = vec![0.0; n];
    let mut vs = vec![0.0; n];
    for step in 0..steps {
        let t = step as f64 * dt;
        let x = hist.x[step].clone();
        let v = hist.v[step].clone();
        // stage 1 reuses the stored acceleration
        kx[0].copy_from_slice(&v);
        kv[0].copy_from_slice(&hist.a[step]);
        for stage in 1..4 {
            let c_stage = if stage == 3 { 1.0 } else { 0.5 };
            for j in 0..n {
                xs[j] = x[j] + c_stage * dt * kx[stage - 1][j];
                vs[j] = v[j] + c_stage * dt * kv[stage - 1][j];
            }
            kx[stage].copy_from_slice(&vs);
            rhs.accel(&hist, t + c_stage * dt, &xs, &vs, &mut kv[stage]);
        }
        let mut xn = vec![0.0; n];
        let mut vn = vec![0.0; n];
        let mut blown = false;
        for j in 0..n {
            xn[j] = x[j] + dt / 6.0 * (kx[0][j] + 2.0 * kx[1][j] + 2.0 * kx[2][j] + kx[3][j]);
            vn[j] = v[j] + dt / 6.0 * (kv[0][j] + 2.0 * kv[1][j] + 2.0 * kv[2][j] + kv[3][j]);
            blown |= !(xn[j].abs() <= DIVERGENCE_LIMIT && vn[j].abs() <= DIVERGENCE_LIMIT);
        }
        hist.x.push(xn.clone());
        hist.v.push(vn.clone());
        let mut an = vec![0.0; n];
        rhs.accel(&hist, t + dt, &xn, &vn, &mut an);
        hist.a.push(an);
        if (step + 1) % stride == 0 || step + 1 == steps || blown {
            traj.times.push(t + dt);
            traj.positions.push(xn);
            traj.velocities.push(vn);
        }
        if blown {
            traj.diverged = true;
            break;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Consensus,
    NoConsensus,
    Divergent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusMetrics {
    /// `max_j x_j - min_j x_j` at every recorded sample.
    pub spread: Vec<f64>,
    pub initial_spread: f64,
    pub final_spread: f64,
    /// First time after which the spread stays below 2% of its initial value.
    pub settling_time: Option<f64>,
    /// Mean final position, when the swarm agrees.
    pub consensus_value: Option<f64>,
    /// `ξ1(t_end) / √n`, the agreement value carried by the centroid coordinate.
    pub centroid_value: Option<f64>,
    /// `max_{j≥2} |ξ_j(t_end)|` relative to the initial spread.
    pub disagreement: Option<f64>,
    pub outcome: Outcome,
}

/// Spread, settling and agreement figures of a run; the modal transform
/// adds the centroid and disagreement coordinates.
pub fn consensus_metrics(traj: &Trajectory, modal: Option<&ModalTransform>) -> ConsensusMetrics {
    let spread: Vec<f64> = traj
        .positions
        .iter()
        .map(|x| {
            let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            hi - lo
        })
        .collect();
    let initial_spread = spread[0];
    let final_spread = *spread.last().unwrap();
    let band = SETTLING_FRACTION * initial_spread;
    let settling_time = if traj.diverged || final_spread >= band {
        None
    } else {
        let last_out = spread.iter().rposition(|s| *s >= band);
        Some(last_out.map_or(0.0, |k| traj.times[(k + 1).min(traj.times.len() - 1)]))
    };
    let relative = if initial_spread > 0.0 { final_spread / initial_spread } else { final_spread };
    let outcome = if traj.diverged || final_spread > initial_spread.max(f64::MIN_POSITIVE) {
        Outcome::Divergent
    } else if relative < CONSENSUS_SPREAD {
        Outcome::Consensus
    } else {
        Outcome::NoConsensus
    };
    let last = traj.positions.last().unwrap();
    let n = last.len() as f64;
    let consensus_value = (outcome == Outcome::Consensus).then(|| last.iter().sum::<f64>() / n);
    let (centroid_value, disagreement) = match modal {
        Some(m) if !traj.diverged => {
            let xi = m.modal(last);
            let rest = xi[1..].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            (Some(xi[0] / n.sqrt()), Some(rest / initial_spread.max(f64::MIN_POSITIVE)))
        }
        _ => (None, None),
    };
    ConsensusMetrics { spread, initial_spread, final_spread, settling_time, consensus_value, centroid_value, disagreement, outcome }
}
