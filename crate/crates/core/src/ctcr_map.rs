//! Root tendencies and exact unstable-root counting in the delay plane.
//!
//! The count at `(τ1, τ2)` starts from the delay-free polynomial and walks
//! the path `(0,0) → (τ1,0) → (τ1,τ2)`. Every transversal crossing of a
//! kernel or offspring curve changes the count by `2·RT` (the pair `±iω`
//! crosses together). Crossings on the `τ1` axis are solved in closed form;
//! crossings on the vertical leg are located on the traced polylines and
//! then refined on the true curve by Newton's method.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factorization::QuasiPolynomial;
use crate::linalg::EigenError;
use crate::poly::Poly;
use crate::sds_curves::{kernel_and_offspring, sig12, trace_building_curves, BuildingCurves, DelaySpaceCurves, SdsError};
use crate::svg::{Svg, SvgStyle};

/// Points closer than this to a crossing curve are Marginal.
pub const TOL_CURVE: f64 = 1e-6;
/// Staircase detours tried around a tangential crossing.
pub const DETOUR_ATTEMPTS: usize = 5;
/// Half-length of the probes used to detect a nearby curve.
const PROBE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DelayIndex {
    Tau1,
    Tau2,
}

impl DelayIndex {
    pub fn other(self) -> Self {
        match self {
            DelayIndex::Tau1 => DelayIndex::Tau2,
            DelayIndex::Tau2 => DelayIndex::Tau1,
        }
    }
}

#[derive(Debug, Error)]
pub enum CtcrError {
    #[error("non-simple crossing at τ = ({tau1}, {tau2}), ω = {omega}")]
    NonSimpleCrossing { tau1: f64, tau2: f64, omega: f64 },
    #[error("unclassifiable point ({tau1}, {tau2})")]
    Unclassifiable { tau1: f64, tau2: f64 },
    #[error("delays must be nonnegative and finite, got ({tau1}, {tau2})")]
    InvalidPoint { tau1: f64, tau2: f64 },
    #[error("inconsistent crossing count {count} at ({tau1}, {tau2})")]
    Inconsistent { tau1: f64, tau2: f64, count: i64 },
    #[error("grid step must be positive and at most τ_max, got {0}")]
    Grid(f64),
    #[error("delay-free polynomial has roots on the imaginary axis away from the structural root")]
    MarginalAnchor,
    #[error(transparent)]
    Sds(#[from] SdsError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// `sgn Re(∂s/∂τ_j)` at `s = iω`: `+1` the root moves into the right half
/// plane as `τ_j` grows, `-1` it moves left, `0` tangential.
pub fn root_tendency(
    qp: &QuasiPolynomial,
    tau1: f64,
    tau2: f64,
    omega: f64,
    delay: DelayIndex,
) -> Result<i8, CtcrError> {
    let e = qp.evaluate_full(Complex64::new(0.0, omega), tau1, tau2);
    if e.d_s.norm() <= 1e-14 * e.scale.max(f64::MIN_POSITIVE) {
        return Err(CtcrError::NonSimpleCrossing { tau1, tau2, omega });
    }
    let d_tau = match delay {
        DelayIndex::Tau1 => e.d_tau1,
        DelayIndex::Tau2 => e.d_tau2,
    };
    let ds_dtau = -d_tau / e.d_s;
    Ok(if ds_dtau.re.abs() < 1e-10 * ds_dtau.norm().max(f64::MIN_POSITIVE) {
        0
    } else if ds_dtau.re > 0.0 {
        1
    } else {
        -1
    })
}

/// An imaginary-axis crossing on one delay axis (the other delay zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisCrossing {
    pub tau: f64,
    pub omega: f64,
    pub rt: i8,
}

/// Crossings of `qp` along the `axis` delay with the other delay held at
/// zero, up to `tau_max`, sorted by delay.
///
/// With one delay zeroed, every factor reduces to `m(s) - λ k(s) z` (or the
/// product of two such terms for a conjugate pair) with `z = e^{-τ s}`; an
/// imaginary root needs `|m(iω)| = |λ k(iω)|`, a quartic in `ω`.
pub fn axis_crossings(qp: &QuasiPolynomial, axis: DelayIndex, tau_max: f64) -> Result<Vec<AxisCrossing>, CtcrError> {
    let (p, d) = (qp.gains.p, qp.gains.d);
    let lambda = qp.lambda;
    if lambda.norm() == 0.0 {
        return Ok(Vec::new());
    }
    // on the τ1 axis m = n - λDs, k = P; on the τ2 axis m = n - λP, k = Ds
    let (a, b) = (lambda.re, lambda.im);
    let m2 = lambda.norm_sqr();
    // |m(iω)|² - |λ|²|k(iω)|² as a polynomial in ω
    let quartic = match axis {
        DelayIndex::Tau1 => {
            // m(iω) = P - ω² + Dbω + iD(1 - a)ω
            let re = Poly::new(vec![p, d * b, -1.0]);
            let im = Poly::new(vec![0.0, d * (1.0 - a)]);
            sub(&add(&square(&re), &square(&im)), &Poly::new(vec![m2 * p * p]))
        }
        DelayIndex::Tau2 => {
            // m(iω) = P(1 - a) - ω² + i(Dω - Pb)
            let re = Poly::new(vec![p * (1.0 - a), 0.0, -1.0]);
            let im = Poly::new(vec![-p * b, d]);
            sub(&add(&square(&re), &square(&im)), &Poly::new(vec![0.0, 0.0, m2 * d * d]))
        }
    };
    let mut out = Vec::new();
    for w in quartic.real_roots(1e-7)? {
        if w.abs() < crate::sds_curves::OMEGA_MIN {
            continue;
        }
        let s = Complex64::new(0.0, w);
        let (m, k) = match axis {
            DelayIndex::Tau1 => (s * s + d * s + p - lambda * d * s, lambda * p),
            DelayIndex::Tau2 => (s * s + d * s + p - lambda * p, lambda * d * s),
        };
        // m - k z = 0  →  z = m / k = e^{-iωτ}
        let z = m / k;
        let phase = z.arg();
        let freq = w.abs();
        // ωτ ≡ -arg z for ω > 0; the mirrored root of the conjugate factor otherwise
        let base = if w > 0.0 { (-phase).rem_euclid(TAU) } else { phase.rem_euclid(TAU) };
        let mut nu = base;
        while nu / freq <= tau_max * (1.0 + 1e-12) + TOL_CURVE {
            let tau = nu / freq;
            if tau > 0.0 {
                let (t1, t2) = match axis {
                    DelayIndex::Tau1 => (tau, 0.0),
                    DelayIndex::Tau2 => (0.0, tau),
                };
                let rt = root_tendency(qp, t1, t2, freq, axis)?;
                out.push(AxisCrossing { tau, omega: freq, rt });
            }
            nu += TAU;
        }
    }
    out.sort_by(|x, y| x.tau.total_cmp(&y.tau));
    out.dedup_by(|x, y| (x.tau - y.tau).abs() < 1e-12 && (x.omega - y.omega).abs() < 1e-9);
    Ok(out)
}

fn square(p: &Poly) -> Poly {
    mul(p, p)
}

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut c = vec![0.0; a.coeffs.len() + b.coeffs.len() - 1];
    for (i, x) in a.coeffs.iter().enumerate() {
        for (j, y) in b.coeffs.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    Poly::new(c)
}

fn add(a: &Poly, b: &Poly) -> Poly {
    let n = a.coeffs.len().max(b.coeffs.len());
    Poly::new((0..n).map(|k| a.coeffs.get(k).unwrap_or(&0.0) + b.coeffs.get(k).unwrap_or(&0.0)).collect())
}

fn sub(a: &Poly, b: &Poly) -> Poly {
    add(a, &Poly::new(b.coeffs.iter().map(|c| -c).collect()))
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: [f64; 2],
    b: [f64; 2],
    wa: f64,
    wb: f64,
}

impl Segment {
    fn length(&self) -> f64 {
        ((self.a[0] - self.b[0]).powi(2) + (self.a[1] - self.b[1]).powi(2)).sqrt()
    }

    fn distance(&self, p: [f64; 2]) -> f64 {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > 0.0 {
            (((p[0] - self.a[0]) * d[0] + (p[1] - self.a[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        ((self.a[0] + t * d[0] - p[0]).powi(2) + (self.a[1] + t * d[1] - p[1]).powi(2)).sqrt()
    }
}

/// A crossing of a traced curve with an axis-parallel line, refined onto the
/// true curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineCrossing {
    /// Coordinate along the line (the varying delay).
    pub at: f64,
    pub omega: f64,
    /// Root tendency with respect to the varying delay.
    pub rt: i8,
    /// Whether Newton refinement on the true curve succeeded.
    pub refined: bool,
}

/// Everything CTCR needs about one factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorCurves {
    pub qp: QuasiPolynomial,
    pub building: BuildingCurves,
    pub curves: DelaySpaceCurves,
    /// Crossings along `τ1` with `τ2 = 0`.
    pub tau1_axis: Vec<AxisCrossing>,
    /// Crossings along `τ2` with `τ1 = 0`.
    pub tau2_axis: Vec<AxisCrossing>,
    /// Unstable roots of the delay-free polynomial.
    pub anchor: usize,
    #[serde(skip)]
    index: SegmentIndex,
}

#[derive(Debug, Clone, Default)]
struct SegmentIndex {
    segments: Vec<Segment>,
    bucket_width: f64,
    /// Segment ids per `τ1` bucket.
    by_tau1: Vec<Vec<u32>>,
    by_tau2: Vec<Vec<u32>>,
}

impl SegmentIndex {
    fn new(curves: &DelaySpaceCurves, tau_max: f64) -> Self {
        let segments: Vec<Segment> = curves
            .segments()
            .map(|(u, v)| Segment {
                a: [u.tau1, u.tau2],
                b: [v.tau1, v.tau2],
                wa: u.omega,
                wb: v.omega,
            })
            .collect();
        let buckets = 512usize;
        let bucket_width = tau_max / buckets as f64;
        let mut by_tau1 = vec![Vec::new(); buckets];
        let mut by_tau2 = vec![Vec::new(); buckets];
        let range = |lo: f64, hi: f64| {
            let a = ((lo / bucket_width).floor().max(0.0) as usize).min(buckets - 1);
            let b = ((hi / bucket_width).floor().max(0.0) as usize).min(buckets - 1);
            a..=b
        };
        for (k, s) in segments.iter().enumerate() {
            let (x0, x1) = (s.a[0].min(s.b[0]), s.a[0].max(s.b[0]));
            let (y0, y1) = (s.a[1].min(s.b[1]), s.a[1].max(s.b[1]));
            if x0 <= tau_max {
                for i in range(x0, x1) {
                    by_tau1[i].push(k as u32);
                }
            }
            if y0 <= tau_max {
                for j in range(y0, y1) {
                    by_tau2[j].push(k as u32);
                }
            }
        }
        Self { segments, bucket_width, by_tau1, by_tau2 }
    }

    /// Segments whose `axis` extent may contain `value`.
    fn candidates(&self, axis: DelayIndex, value: f64) -> Box<dyn Iterator<Item = &Segment> + '_> {
        let table = match axis {
            DelayIndex::Tau1 => &self.by_tau1,
            DelayIndex::Tau2 => &self.by_tau2,
        };
        if table.is_empty() {
            return Box::new(std::iter::empty());
        }
        let k = (value / self.bucket_width).floor();
        if k < 0.0 {
            return Box::new(std::iter::empty());
        }
        if k as usize >= table.len() {
            // beyond the indexed range: fall back to a scan
            return Box::new(self.segments.iter());
        }
        Box::new(table[k as usize].iter().map(move |&i| &self.segments[i as usize]))
    }
}

impl FactorCurves {
    /// Traces the building curves at `resolution` and maps them to
    /// `[0, τ_max]²`.
    pub fn compute(qp: &QuasiPolynomial, tau_max: f64, resolution: usize) -> Result<Self, CtcrError> {
        let building = trace_building_curves(qp, resolution)?;
        let curves = kernel_and_offspring(qp, &building, tau_max)?;
        let count = qp.delay_free_unstable_count()?;
        let structural = if qp.is_centroid() { 2 } else { 0 };
        if count.marginal > structural {
            return Err(CtcrError::MarginalAnchor);
        }
        let index = SegmentIndex::new(&curves, tau_max);
        Ok(Self {
            qp: qp.clone(),
            tau1_axis: axis_crossings(qp, DelayIndex::Tau1, tau_max)?,
            tau2_axis: axis_crossings(qp, DelayIndex::Tau2, tau_max)?,
            anchor: count.unstable,
            building,
            curves,
            index,
        })
    }

    pub fn tau_max(&self) -> f64 {
        self.curves.tau_max
    }

    /// Crossings of the line `fixed = value` for the varying delay in
    /// `(lo, hi]`, sorted along the line.
    pub fn line_crossings(&self, fixed: DelayIndex, value: f64, lo: f64, hi: f64) -> Result<Vec<LineCrossing>, CtcrError> {
        let free = fixed.other();
        let (fi, vi) = match fixed {
            DelayIndex::Tau1 => (0, 1),
            DelayIndex::Tau2 => (1, 0),
        };
        let mut out = Vec::new();
        for s in self.index.candidates(fixed, value) {
            if (s.a[fi] < value) == (s.b[fi] < value) {
                continue;
            }
            let t = (value - s.a[fi]) / (s.b[fi] - s.a[fi]);
            let at0 = s.a[vi] + t * (s.b[vi] - s.a[vi]);
            let w0 = s.wa + t * (s.wb - s.wa);
            let reach = 2.0 * s.length() + 1e-6;
            if at0 < lo - reach || at0 > hi + reach {
                continue;
            }
            let (at, omega, refined) = match refine_on_line(&self.qp, fixed, value, at0, w0, reach) {
                Some((a, w)) => (a, w, true),
                None => (at0, w0, false),
            };
            if at <= lo || at > hi {
                continue;
            }
            let (t1, t2) = match fixed {
                DelayIndex::Tau1 => (value, at),
                DelayIndex::Tau2 => (at, value),
            };
            let rt = root_tendency(&self.qp, t1, t2, omega, free)?;
            out.push(LineCrossing { at, omega, rt, refined });
        }
        out.sort_by(|x, y| x.at.total_cmp(&y.at));
        Ok(out)
    }

    fn axis(&self, axis: DelayIndex) -> &[AxisCrossing] {
        match axis {
            DelayIndex::Tau1 => &self.tau1_axis,
            DelayIndex::Tau2 => &self.tau2_axis,
        }
    }

    /// Count along an axis from the origin to `tau` (exclusive).
    fn axis_count(&self, axis: DelayIndex, tau: f64) -> i64 {
        self.anchor as i64
            + self
                .axis(axis)
                .iter()
                .filter(|c| c.tau < tau)
                .map(|c| 2 * i64::from(c.rt))
                .sum::<i64>()
    }

    /// Whether a curve passes within `TOL_CURVE` of the point.
    fn near_curve(&self, tau1: f64, tau2: f64) -> Result<bool, CtcrError> {
        let tol = TOL_CURVE * std::f64::consts::SQRT_2;
        if tau2 == 0.0 && self.tau1_axis.iter().any(|c| (c.tau - tau1).abs() < tol) {
            return Ok(true);
        }
        if tau1 == 0.0 && self.tau2_axis.iter().any(|c| (c.tau - tau2).abs() < tol) {
            return Ok(true);
        }
        let v = self.line_crossings(DelayIndex::Tau1, tau1, tau2 - PROBE, tau2 + PROBE)?;
        let h = self.line_crossings(DelayIndex::Tau2, tau2, tau1 - PROBE, tau1 + PROBE)?;
        Ok(v.iter().any(|c| (c.at - tau2).abs() < tol) || h.iter().any(|c| (c.at - tau1).abs() < tol))
    }

    /// Unstable roots of this factor at `(τ1, τ2)` (structural root excluded).
    pub fn unstable_count(&self, tau1: f64, tau2: f64) -> Result<PointCount, CtcrError> {
        if !(tau1 >= 0.0 && tau2 >= 0.0 && tau1.is_finite() && tau2.is_finite()) {
            return Err(CtcrError::InvalidPoint { tau1, tau2 });
        }
        if self.near_curve(tau1, tau2)? {
            return Ok(PointCount::Marginal);
        }
        if tau1 == 0.0 {
            return self.checked(tau1, tau2, self.axis_count(DelayIndex::Tau2, tau2));
        }
        for attempt in 0..=DETOUR_ATTEMPTS {
            let delta = attempt as f64 * 10.0 * TOL_CURVE;
            let x = if tau1 > delta { tau1 - delta } else { tau1 + delta };
            let mut count = self.axis_count(DelayIndex::Tau1, x);
            if self.tau1_axis.iter().any(|c| (c.tau - x).abs() < TOL_CURVE) {
                continue;
            }
            let up = self.line_crossings(DelayIndex::Tau1, x, 0.0, tau2)?;
            if up.iter().any(|c| c.rt == 0) {
                continue;
            }
            count += up.iter().map(|c| 2 * i64::from(c.rt)).sum::<i64>();
            if delta > 0.0 {
                let (lo, hi, sign) = if x < tau1 { (x, tau1, 1) } else { (tau1, x, -1) };
                let side = self.line_crossings(DelayIndex::Tau2, tau2, lo, hi)?;
                if side.iter().any(|c| c.rt == 0) {
                    continue;
                }
                count += sign * side.iter().map(|c| 2 * i64::from(c.rt)).sum::<i64>();
            }
            return self.checked(tau1, tau2, count);
        }
        Err(CtcrError::Unclassifiable { tau1, tau2 })
    }

    fn checked(&self, tau1: f64, tau2: f64, count: i64) -> Result<PointCount, CtcrError> {
        if count < 0 {
            Err(CtcrError::Inconsistent { tau1, tau2, count })
        } else {
            Ok(PointCount::Count(count as usize))
        }
    }

    /// Counts for the cell centres `(τ1, (j + ½)h)`, `j < rows`, from one
    /// vertical sweep. `None` marks centres within `TOL_CURVE` of a crossing.
    fn column(&self, tau1: f64, h: f64, rows: usize) -> Result<Vec<Option<i64>>, CtcrError> {
        let top = (rows as f64) * h;
        for attempt in 0..=DETOUR_ATTEMPTS {
            let x = tau1 - attempt as f64 * 10.0 * TOL_CURVE;
            if self.tau1_axis.iter().any(|c| (c.tau - x).abs() < TOL_CURVE) {
                continue;
            }
            let up = self.line_crossings(DelayIndex::Tau1, x, 0.0, top)?;
            if up.iter().any(|c| c.rt == 0) {
                continue;
            }
            let mut count = self.axis_count(DelayIndex::Tau1, x);
            let mut out = Vec::with_capacity(rows);
            let mut k = 0;
            for j in 0..rows {
                let y = (j as f64 + 0.5) * h;
                while k < up.len() && up[k].at <= y {
                    count += 2 * i64::from(up[k].rt);
                    k += 1;
                }
                let marginal = up.iter().any(|c| (c.at - y).abs() < TOL_CURVE);
                if count < 0 && !marginal {
                    return Err(CtcrError::Inconsistent { tau1, tau2: y, count });
                }
                out.push((!marginal).then_some(count));
            }
            return Ok(out);
        }
        Err(CtcrError::Unclassifiable { tau1, tau2: 0.0 })
    }
}

/// Newton on `q(iω; τ) = 0` along an axis-parallel line; returns the free
/// delay and `ω` if it converges within `reach` of the start.
fn refine_on_line(qp: &QuasiPolynomial, fixed: DelayIndex, value: f64, at0: f64, w0: f64, reach: f64) -> Option<(f64, f64)> {
    let (mut at, mut w) = (at0, w0);
    for _ in 0..12 {
        let (t1, t2) = match fixed {
            DelayIndex::Tau1 => (value, at),
            DelayIndex::Tau2 => (at, value),
        };
        let e = qp.evaluate_full(Complex64::new(0.0, w), t1, t2);
        let da = match fixed {
            DelayIndex::Tau1 => e.d_tau2,
            DelayIndex::Tau2 => e.d_tau1,
        };
        let dw = Complex64::i() * e.d_s;
        let det = da.re * dw.im - dw.re * da.im;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let step_a = (-e.value.re * dw.im + dw.re * e.value.im) / det;
        let step_w = (-da.re * e.value.im + e.value.re * da.im) / det;
        at += step_a;
        w += step_w;
        if step_a.abs() < 1e-14 * (1.0 + at.abs()) && step_w.abs() < 1e-14 * (1.0 + w.abs()) {
            break;
        }
    }
    let (t1, t2) = match fixed {
        DelayIndex::Tau1 => (value, at),
        DelayIndex::Tau2 => (at, value),
    };
    let e = qp.evaluate_full(Complex64::new(0.0, w), t1, t2);
    let ok = e.value.norm() < 1e-9 * e.scale
        && (at - at0).abs() <= reach
        && (w - w0).abs() <= 0.05 * w0.abs() + 1e-6
        && w > 0.0;
    ok.then_some((at, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointCount {
    Count(usize),
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::Marginal => "marginal",
        }
    }
}

/// Composite classification at a single point.
pub fn classify(factors: &[FactorCurves], tau1: f64, tau2: f64) -> Result<(Classification, usize), CtcrError> {
    let mut total = 0;
    let mut marginal = false;
    for f in factors {
        match f.unstable_count(tau1, tau2)? {
            PointCount::Count(c) => total += c,
            PointCount::Marginal => marginal = true,
        }
    }
    let class = if total > 0 {
        Classification::Unstable
    } else if marginal {
        Classification::Marginal
    } else {
        Classification::Stable
    };
    Ok((class, total))
}

/// Cell-centred raster of unstable-root counts over `[0, τ_max]²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityMap {
    pub tau_max: f64,
    pub h: f64,
    /// Cells per axis; cell `(i, j)` is centred at `((i+½)h, (j+½)h)`.
    pub cells: usize,
    /// Per factor, row-major (`j * cells + i`); `None` on a curve.
    pub factor_nu: Vec<Vec<Option<u32>>>,
    pub nu_total: Vec<u32>,
    pub class: Vec<Classification>,
    /// Distance from each cell centre to the nearest curve, capped at `distance_cap`.
    pub boundary_distance: Vec<f64>,
    pub distance_cap: f64,
    /// Whether eigenvalue 1 is simple (a single centroid factor).
    pub consensus_possible: bool,
}

impl StabilityMap {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Cell containing `(τ1, τ2)`.
    pub fn cell_of(&self, tau1: f64, tau2: f64) -> Option<(usize, usize)> {
        let i = (tau1 / self.h).floor();
        let j = (tau2 / self.h).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.cells && (j as usize) < self.cells).then(|| (i as usize, j as usize))
    }

    pub fn class_at(&self, tau1: f64, tau2: f64) -> Option<Classification> {
        self.cell_of(tau1, tau2).map(|(i, j)| self.class[self.index(i, j)])
    }

    pub fn stable_fraction(&self) -> f64 {
        self.class.iter().filter(|c| **c == Classification::Stable).count() as f64 / self.class.len() as f64
    }

    /// CSV rows `tau1,tau2,nu_total,class,boundary_distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau1,tau2,nu_total,class,boundary_distance\n");
        for j in 0..self.cells {
            for i in 0..self.cells {
                let k = self.index(i, j);
                let (x, y) = self.center(i, j);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    sig12(x),
                    sig12(y),
                    self.nu_total[k],
                    self.class[k].as_str(),
                    sig12(self.boundary_distance[k])
                );
            }
        }
        out
    }

    /// Shaded stable region with the crossing curves on top.
    pub fn to_svg(&self, factors: &[FactorCurves]) -> String {
        let mut svg = Svg::new(self.tau_max, self.tau_max, "τ1 [s]", "τ2 [s]");
        for j in 0..self.cells {
            for i in 0..self.cells {
                let fill = match self.class[self.index(i, j)] {
                    Classification::Stable => "#9ecae1",
                    Classification::Unstable => continue,
                    Classification::Marginal => "#636363",
                };
                svg.cell(i as f64 * self.h, j as f64 * self.h, self.h, self.h, fill);
            }
        }
        for (k, f) in factors.iter().enumerate() {
            let style = SvgStyle::palette(k);
            for line in &f.curves.polylines {
                let pts: Vec<(f64, f64)> = line.vertices.iter().map(|v| (v.tau1, v.tau2)).collect();
                svg.polyline(&pts, style);
            }
        }
        svg.finish()
    }
}

/// Classifies every cell of `[0, τ_max]²` at step `h`.
pub fn stability_map(factors: &[FactorCurves], tau_max: f64, h: f64) -> Result<StabilityMap, CtcrError> {
    if !(h > 0.0 && h <= tau_max) {
        return Err(CtcrError::Grid(h));
    }
    let cells = (tau_max / h).round().max(1.0) as usize;
    let columns: Vec<Vec<Vec<Option<i64>>>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            factors.iter().map(|f| f.column(x, h, cells)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let distance_cap = 5.0 * h;
    let boundary_distance = distance_raster(factors, cells, h, distance_cap);
    let mut factor_nu = vec![vec![None; cells * cells]; factors.len()];
    let mut nu_total = vec![0u32; cells * cells];
    let mut class = vec![Classification::Stable; cells * cells];
    for (i, col) in columns.iter().enumerate() {
        for j in 0..cells {
            let k = j * cells + i;
            let mut marginal = boundary_distance[k] < TOL_CURVE;
            for (f, counts) in col.iter().enumerate() {
                match counts[j] {
                    Some(c) => {
                        factor_nu[f][k] = Some(c as u32);
                        nu_total[k] += c as u32;
                    }
                    None => marginal = true,
                }
            }
            class[k] = if nu_total[k] > 0 {
                Classification::Unstable
            } else if marginal {
                Classification::Marginal
            } else {
                Classification::Stable
            };
        }
    }
    let centroids = factors.iter().filter(|f| f.qp.is_centroid()).count();
    Ok(StabilityMap {
        tau_max: cells as f64 * h,
        h,
        cells,
        factor_nu,
        nu_total,
        class,
        boundary_distance,
        distance_cap,
        consensus_possible: centroids == 1,
    })
}

/// Distance from every cell centre to the nearest curve segment or axis
/// crossing, capped at `cap`.
fn distance_raster(factors: &[FactorCurves], cells: usize, h: f64, cap: f64) -> Vec<f64> {
    let mut dist = vec![cap; cells * cells];
    let reach = (cap / h).ceil() as i64 + 1;
    let mut visit = |p: [f64; 2], q: [f64; 2], seg: &dyn Fn([f64; 2]) -> f64| {
        let i0 = ((p[0].min(q[0]) / h).floor() as i64 - reach).max(0);
        let i1 = ((p[0].max(q[0]) / h).floor() as i64 + reach).min(cells as i64 - 1);
        let j0 = ((p[1].min(q[1]) / h).floor() as i64 - reach).max(0);
        let j1 = ((p[1].max(q[1]) / h).floor() as i64 + reach).min(cells as i64 - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                let k = j as usize * cells + i as usize;
                let d = seg(c);
                if d < dist[k] {
                    dist[k] = d;
                }
            }
        }
    };
    for f in factors {
        for s in &f.index.segments {
            if s.a[0].min(s.b[0]) > cells as f64 * h + cap || s.a[1].min(s.b[1]) > cells as f64 * h + cap {
                continue;
            }
            visit(s.a, s.b, &|c| s.distance(c));
        }
        for c in &f.tau1_axis {
            let p = [c.tau, 0.0];
            visit(p, p, &|q| ((q[0] - p[0]).powi(2) + q[1] * q[1]).sqrt());
        }
        for c in &f.tau2_axis {
            let p = [0.0, c.tau];
            visit(p, p, &|q| (q[0] * q[0] + (q[1] - p[1]).powi(2)).sqrt());
        }
    }
    dist
}
