//! Mapping-based root finding for the factors in a rectangle of the upper
//! complex half plane, the dominant (rightmost) root, and the `Re s_dom`
//! surface over the delay plane.
//!
//! The factor is sampled on a grid, cells where both `Re q` and `Im q` change
//! sign are intersected by marching squares, and every candidate is polished
//! by Newton's method. Delay exponentials are separable on the grid,
//! `e^{-τ(σ+iω)} = e^{-τσ} e^{-iτω}`, so a grid node costs a few complex
//! products.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factorization::{FactorKind, QuasiPolynomial};
use crate::sds_curves::sig12;
use crate::svg::{diverging_color, Svg, SvgStyle};

/// Residual a reported root must meet, relative to the factor scale.
pub const ACCEPT_TOL: f64 = 1e-9;
/// Newton stops early below this relative residual.
pub const POLISH_TOL: f64 = 1e-12;
/// Roots closer than this are the same root.
pub const DEDUP_TOL: f64 = 1e-6;
/// Default upper edge of the frequency window.
pub const DEFAULT_OMEGA_MAX: f64 = 20.0;
/// Default left edge of the dominant-root window, halved (widened) on failure.
pub const DEFAULT_SIGMA_MIN: f64 = -2.0;
const MAX_NEWTON: usize = 80;

#[derive(Debug, Error)]
pub enum QprError {
    #[error("empty spectrum window (searched Re s ≥ {sigma_min}, Im s ≤ {omega_max})")]
    EmptyWindow { sigma_min: f64, omega_max: f64 },
    #[error("invalid rectangle or step: {0}")]
    Region(String),
    #[error("no factors given")]
    NoFactors,
}

/// `[σ_min, σ_max] × [ω_min, ω_max]` in the `s` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Rect {
    pub fn upper(sigma_min: f64, sigma_max: f64, omega_max: f64) -> Self {
        Self { sigma_min, sigma_max, omega_min: 0.0, omega_max }
    }

    pub fn contains(&self, s: Complex64) -> bool {
        s.re >= self.sigma_min && s.re <= self.sigma_max && s.im >= self.omega_min && s.im <= self.omega_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QprRoot {
    pub s: Complex64,
    /// `|q(s)| / scale`.
    pub residual: f64,
    /// Multiplicity two or more (linear Newton convergence or vanishing slope).
    pub multiple: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RootScan {
    /// Upper half plane only, ordered by decreasing real part.
    pub roots: Vec<QprRoot>,
    /// Candidates whose Newton iteration failed.
    pub dropped: usize,
}

/// Roots found in a window plus the rightmost of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub region: Rect,
    pub roots: Vec<QprRoot>,
    pub dominant: Option<QprRoot>,
}

/// Default grid step for delays `(τ1, τ2)`: fine enough to resolve the
/// oscillation of `e^{-τ s}` along the imaginary axis.
pub fn default_step(tau1: f64, tau2: f64) -> f64 {
    0.05_f64.min(0.5 / (tau1 + tau2).max(1.0))
}

/// The function whose zeros are sought: a factor, or the centroid factor
/// with its structural root divided out.
#[derive(Clone, Copy)]
struct Target<'a> {
    qp: &'a QuasiPolynomial,
    tau1: f64,
    tau2: f64,
    deflate: bool,
}

impl Target<'_> {
    /// Value from precomputed `e^{-τ1 s}`, `e^{-τ2 s}`.
    #[inline]
    fn value_with(&self, s: Complex64, e1: Complex64, e2: Complex64) -> Complex64 {
        if self.deflate {
            let (p, d) = (self.qp.gains.p, self.qp.gains.d);
            return s + d * (1.0 - e2) + p * one_minus_exp_over(s, e1, self.tau1);
        }
        let mut v = Complex64::new(0.0, 0.0);
        for t in &self.qp.terms {
            let mut e = t.poly_at(s);
            for _ in 0..t.tau1 {
                e *= e1;
            }
            for _ in 0..t.tau2 {
                e *= e2;
            }
            v += e;
        }
        v
    }

    /// Value, derivative and residual scale.
    fn full(&self, s: Complex64) -> (Complex64, Complex64, f64) {
        if !self.deflate {
            let e = self.qp.evaluate_full(s, self.tau1, self.tau2);
            return (e.value, e.d_s, e.scale);
        }
        let (p, d) = (self.qp.gains.p, self.qp.gains.d);
        let e1 = (-s * self.tau1).exp();
        let e2 = (-s * self.tau2).exp();
        let z = s * self.tau1;
        let (phi, dphi) = phi_and_derivative(z, e1);
        let value = s + d * (1.0 - e2) + p * self.tau1 * phi;
        let deriv = 1.0 + d * self.tau2 * e2 + p * self.tau1 * self.tau1 * dphi;
        let scale = s.norm() + d * (1.0 + e2.norm()) + p * self.tau1 * (1.0 + e1.norm()) / (1.0 + z.norm()) + 1e-300;
        (value, deriv, scale)
    }
}

/// `(1 - e^{-τ s}) / s`, continuous through `s = 0`.
#[inline]
fn one_minus_exp_over(s: Complex64, e: Complex64, tau: f64) -> Complex64 {
    let z = s * tau;
    if z.norm() < 0.1 {
        tau * phi_and_derivative(z, e).0
    } else {
        (1.0 - e) / s
    }
}

/// `φ(z) = (1 - e^{-z}) / z` and `φ'(z)`; `e = e^{-z}`.
fn phi_and_derivative(z: Complex64, e: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 0.1 {
        // φ = Σ (-z)^k / (k+1)!,  φ' = -Σ k (-z)^{k-1} / (k+1)!
        let mut phi = Complex64::new(0.0, 0.0);
        let mut dphi = Complex64::new(0.0, 0.0);
        let mut prev = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for k in 0..14 {
            fact *= (k + 1) as f64;
            phi += pow / fact;
            dphi -= k as f64 * prev / fact;
            prev = pow;
            pow *= -z;
        }
        (phi, dphi)
    } else {
        let phi = (1.0 - e) / z;
        let dphi = (e * (1.0 + z) - 1.0) / (z * z);
        (phi, dphi)
    }
}

/// Newton's method with multiplicity detection. Returns the root, its relative
/// residual and whether linear convergence revealed a multiple root.
fn newton(target: &Target, s0: Complex64) -> Option<QprRoot> {
    let mut s = s0;
    let mut mult = 1.0;
    let mut prev_step = f64::INFINITY;
    let mut ratios = [0.0_f64; 3];
    let mut multiple = false;
    for it in 0..MAX_NEWTON {
        let (v, dv, scale) = target.full(s);
        if !v.re.is_finite() || !v.im.is_finite() {
            return None;
        }
        if v.norm() <= POLISH_TOL * scale {
            break;
        }
        if dv.norm() == 0.0 {
            break;
        }
        let mut step = mult * v / dv;
        let len = step.norm();
        if len > 1.0 {
            step /= len;
        }
        s -= step;
        let len = step.norm();
        let ratio = len / prev_step;
        prev_step = len;
        ratios.rotate_left(1);
        ratios[2] = ratio;
        if !multiple && it >= 4 && ratios.iter().all(|r| (r - ratios[2]).abs() < 0.05 && *r > 0.3 && *r < 0.95) {
            multiple = true;
            mult = (1.0 / (1.0 - ratios[2])).round().clamp(2.0, 4.0);
        }
        if len <= 1e-15 * (1.0 + s.norm()) {
            break;
        }
    }
    let (v, dv, scale) = target.full(s);
    let residual = if v.norm() == 0.0 { 0.0 } else { v.norm() / scale };
    // a vanishing slope at the converged point also reveals multiplicity
    multiple |= dv.norm() * (1.0 + s.norm()) < 1e-5 * scale;
    if !(residual < ACCEPT_TOL) {
        return None;
    }
    if s.im.abs() < 1e-10 * (1.0 + s.re.abs()) {
        s.im = 0.0;
    }
    Some(QprRoot { s: if s.im < 0.0 { s.conj() } else { s }, residual, multiple })
}

/// Values of the target on one grid column at `σ`, rows `ω_k = ω0 + k·step`.
struct Column {
    sigma: f64,
    values: Vec<Complex64>,
}

/// Row phasors `e^{-iτω_k}` shared by every column.
struct Phasors {
    omega0: f64,
    step: f64,
    p1: Vec<Complex64>,
    p2: Vec<Complex64>,
}

impl Phasors {
    fn new(tau1: f64, tau2: f64, omega0: f64, step: f64) -> Self {
        let mut out = Self { omega0, step, p1: Vec::new(), p2: Vec::new() };
        out.ensure(2, tau1, tau2);
        out
    }

    fn omega(&self, k: usize) -> f64 {
        self.omega0 + k as f64 * self.step
    }

    fn ensure(&mut self, rows: usize, tau1: f64, tau2: f64) {
        while self.p1.len() < rows {
            let w = self.omega(self.p1.len());
            self.p1.push(Complex64::from_polar(1.0, -tau1 * w));
            self.p2.push(Complex64::from_polar(1.0, -tau2 * w));
        }
    }
}

impl Column {
    fn new(sigma: f64) -> Self {
        Self { sigma, values: Vec::new() }
    }

    fn fill(&mut self, target: &Target, ph: &mut Phasors, rows: usize) {
        ph.ensure(rows, target.tau1, target.tau2);
        let a1 = (-target.tau1 * self.sigma).exp();
        let a2 = (-target.tau2 * self.sigma).exp();
        for k in self.values.len()..rows {
            let s = Complex64::new(self.sigma, ph.omega(k));
            self.values.push(target.value_with(s, a1 * ph.p1[k], a2 * ph.p2[k]));
        }
    }
}

/// Scans the cells between two columns over rows `0..rows-1` and pushes
/// Newton-polished roots into `found`.
fn scan_strip(
    target: &Target,
    left: &Column,
    right: &Column,
    ph: &Phasors,
    rows: usize,
    found: &mut Vec<QprRoot>,
    dropped: &mut usize,
) {
    let sign = |v: f64| v > 0.0;
    for k in 0..rows.saturating_sub(1) {
        // corners counter-clockwise from bottom left
        let c = [left.values[k], right.values[k], right.values[k + 1], left.values[k + 1]];
        let re: Vec<bool> = c.iter().map(|v| sign(v.re)).collect();
        let im: Vec<bool> = c.iter().map(|v| sign(v.im)).collect();
        let changes = |b: &[bool]| b.iter().any(|x| *x != b[0]);
        if !changes(&re) || !changes(&im) {
            continue;
        }
        let x = [left.sigma, right.sigma, right.sigma, left.sigma];
        let y = [ph.omega(k), ph.omega(k), ph.omega(k + 1), ph.omega(k + 1)];
        let seed = level_intersection(&c, &x, &y).unwrap_or_else(|| {
            Complex64::new(0.5 * (left.sigma + right.sigma), ph.omega(k) + 0.5 * ph.step)
        });
        match newton(target, seed) {
            Some(r) => {
                if !found.iter().any(|f| (f.s - r.s).norm() < DEDUP_TOL) {
                    found.push(r);
                }
            }
            None => *dropped += 1,
        }
    }
}

/// Intersection estimate of the `Re = 0` and `Im = 0` level segments in a
/// cell, from linear interpolation along the edges.
fn level_intersection(c: &[Complex64; 4], x: &[f64; 4], y: &[f64; 4]) -> Option<Complex64> {
    let crossings = |f: &dyn Fn(Complex64) -> f64| {
        let mut pts = Vec::with_capacity(4);
        for e in 0..4 {
            let (a, b) = (f(c[e]), f(c[(e + 1) % 4]));
            if (a > 0.0) != (b > 0.0) {
                let t = a / (a - b);
                pts.push([x[e] + t * (x[(e + 1) % 4] - x[e]), y[e] + t * (y[(e + 1) % 4] - y[e])]);
            }
        }
        pts
    };
    let r = crossings(&|v| v.re);
    let i = crossings(&|v| v.im);
    if r.len() != 2 || i.len() != 2 {
        return None;
    }
    let (p, q) = (r[0], r[1]);
    let (u, v) = (i[0], i[1]);
    let d = [q[0] - p[0], q[1] - p[1]];
    let e = [v[0] - u[0], v[1] - u[1]];
    let den = d[0] * e[1] - d[1] * e[0];
    if den.abs() < 1e-300 {
        return None;
    }
    let t = ((u[0] - p[0]) * e[1] - (u[1] - p[1]) * e[0]) / den;
    let t = t.clamp(0.0, 1.0);
    Some(Complex64::new(p[0] + t * d[0], p[1] + t * d[1]))
}

fn sort_roots(roots: &mut [QprRoot]) {
    roots.sort_by(|a, b| b.s.re.total_cmp(&a.s.re).then(a.s.im.total_cmp(&b.s.im)));
}

/// All roots of `qp(·, τ1, τ2)` in `region`, scanning a grid of spacing `step`.
/// Roots below the real axis are reported by their conjugates.
pub fn roots_in_rectangle(
    qp: &QuasiPolynomial,
    tau1: f64,
    tau2: f64,
    region: Rect,
    step: f64,
) -> Result<RootScan, QprError> {
    let target = Target { qp, tau1, tau2, deflate: false };
    scan_rectangle(&target, region, step)
}

fn scan_rectangle(target: &Target, region: Rect, step: f64) -> Result<RootScan, QprError> {
    let finite = [region.sigma_min, region.sigma_max, region.omega_min, region.omega_max, step]
        .iter()
        .all(|v| v.is_finite());
    if !finite || region.sigma_max <= region.sigma_min || region.omega_max <= region.omega_min || step <= 0.0 {
        return Err(QprError::Region(format!("{region:?}, step {step}")));
    }
    let cols = ((region.sigma_max - region.sigma_min) / step).ceil() as usize + 2;
    // half-step offsets keep the real axis inside a row of cells
    let omega0 = region.omega_min - 0.5 * step;
    let rows = ((region.omega_max - omega0) / step).ceil() as usize + 2;
    let mut ph = Phasors::new(target.tau1, target.tau2, omega0, step);
    let sigma0 = region.sigma_min - 0.5 * step;
    let mut left = Column::new(sigma0);
    left.fill(target, &mut ph, rows);
    let mut out = RootScan::default();
    for j in 1..cols {
        let mut right = Column::new(sigma0 + j as f64 * step);
        right.fill(target, &mut ph, rows);
        scan_strip(target, &left, &right, &ph, rows, &mut out.roots, &mut out.dropped);
        left = right;
    }
    out.roots.retain(|r| region.contains(r.s) || (region.omega_min <= 0.0 && region.contains(r.s.conj())));
    sort_roots(&mut out.roots);
    Ok(out)
}

/// Radius containing every root with `Re s ≥ σ`: roots satisfy
/// `n(s) = λ d(s)` for a generating eigenvalue, so
/// `|s|² ≤ D|s|(1 + |λ|E2) + P(1 + |λ|E1)` with `E_k = e^{τ_k max(0, -σ)}`.
pub fn root_radius(qp: &QuasiPolynomial, tau1: f64, tau2: f64, sigma: f64) -> f64 {
    let (p, d) = (qp.gains.p, qp.gains.d);
    let l = qp.lambda.norm();
    let back = (-sigma).max(0.0);
    let b = d * (1.0 + l * (tau2 * back).exp());
    let c = p * (1.0 + l * (tau1 * back).exp());
    0.5 * (b + (b * b + 4.0 * c).sqrt())
}

/// Tunables of the dominant-root search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantOptions {
    /// Initial left edge; halved (moved left) twice before giving up.
    pub sigma_min: f64,
    /// Frequency cap; the scanned height is the smaller of this and the root radius.
    pub omega_max: f64,
    /// Grid step; `None` for [`default_step`].
    pub step: Option<f64>,
}

impl Default for DominantOptions {
    fn default() -> Self {
        Self { sigma_min: DEFAULT_SIGMA_MIN, omega_max: DEFAULT_OMEGA_MAX, step: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantRoot {
    pub s: Complex64,
    /// Index of the factor owning the root.
    pub factor: usize,
    pub residual: f64,
}

/// Rightmost root of one factor. Columns are scanned from a provable right
/// edge leftwards and the scan stops one column past the best root so far.
/// The structural root at the origin of the centroid factor is divided out.
pub fn factor_dominant_root(
    qp: &QuasiPolynomial,
    tau1: f64,
    tau2: f64,
    opts: DominantOptions,
) -> Result<QprRoot, QprError> {
    let target = Target { qp, tau1, tau2, deflate: qp.kind == FactorKind::Centroid };
    let step = opts.step.unwrap_or_else(|| default_step(tau1, tau2));
    let omega0 = -0.5 * step;
    let rows_for = |sigma: f64| {
        let top = root_radius(qp, tau1, tau2, sigma).min(opts.omega_max);
        ((top - omega0) / step).ceil() as usize + 2
    };
    let sigma_right = root_radius(qp, tau1, tau2, 0.0) + step;
    let mut ph = Phasors::new(tau1, tau2, omega0, step);
    let mut right = Column::new(sigma_right);
    let mut found: Vec<QprRoot> = Vec::new();
    let mut dropped = 0;
    let mut floor = opts.sigma_min;
    let mut j = 1usize;
    for _attempt in 0..3 {
        loop {
            let sigma = sigma_right - j as f64 * step;
            if sigma < floor {
                break;
            }
            if let Some(best) = found.first() {
                if right.sigma < best.s.re - step {
                    return Ok(*best);
                }
            }
            let rows = rows_for(sigma);
            let mut left = Column::new(sigma);
            left.fill(&target, &mut ph, rows);
            right.fill(&target, &mut ph, rows);
            scan_strip(&target, &left, &right, &ph, rows, &mut found, &mut dropped);
            sort_roots(&mut found);
            right = left;
            j += 1;
        }
        if let Some(best) = found.first() {
            return Ok(*best);
        }
        floor *= 2.0;
    }
    Err(QprError::EmptyWindow { sigma_min: floor / 2.0, omega_max: opts.omega_max })
}

/// Rightmost root over all factors, excluding the centroid's structural root.
pub fn dominant_root(
    factors: &[QuasiPolynomial],
    tau1: f64,
    tau2: f64,
    opts: DominantOptions,
) -> Result<DominantRoot, QprError> {
    let mut best: Option<DominantRoot> = None;
    for (k, qp) in factors.iter().enumerate() {
        let r = factor_dominant_root(qp, tau1, tau2, opts)?;
        if best.is_none_or(|b| r.s.re > b.s.re) {
            best = Some(DominantRoot { s: r.s, factor: k, residual: r.residual });
        }
    }
    best.ok_or(QprError::NoFactors)
}

/// Spectrum of one factor in a fixed window, with its rightmost root.
pub fn spectrum_estimate(qp: &QuasiPolynomial, tau1: f64, tau2: f64, region: Rect) -> Result<SpectrumEstimate, QprError> {
    let target = Target { qp, tau1, tau2, deflate: qp.kind == FactorKind::Centroid };
    let scan = scan_rectangle(&target, region, default_step(tau1, tau2))?;
    Ok(SpectrumEstimate { region, dominant: scan.roots.first().copied(), roots: scan.roots })
}

/// Winding number of `qp` around the boundary of `region`: the number of
/// roots inside, with multiplicity. Each edge starts from samples dense
/// enough to resolve the delay phasors, then is bisected until every phase
/// increment, and both of its halves, stay below `π/8`.
pub fn winding_number(qp: &QuasiPolynomial, tau1: f64, tau2: f64, region: Rect) -> i64 {
    let corners = [
        Complex64::new(region.sigma_min, region.omega_min),
        Complex64::new(region.sigma_max, region.omega_min),
        Complex64::new(region.sigma_max, region.omega_max),
        Complex64::new(region.sigma_min, region.omega_max),
    ];
    let f = |s: Complex64| qp.evaluate(s, tau1, tau2);
    let limit = std::f64::consts::PI / 8.0;
    // the largest delay in any term sets how fast the phase can turn
    let rate = qp.terms.iter().map(|t| t.delay(tau1, tau2)).fold(0.0, f64::max) + qp.order as f64;
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let pieces = ((b - a).norm() * rate / limit).ceil().max(8.0) as usize;
        for k in 0..pieces {
            let p0 = a + (b - a) * (k as f64 / pieces as f64);
            let p1 = a + (b - a) * ((k + 1) as f64 / pieces as f64);
            let mut stack = vec![(p0, p1, f(p0), f(p1), 0u32)];
            while let Some((p, q, fp, fq, depth)) = stack.pop() {
                let m = 0.5 * (p + q);
                let fm = f(m);
                let (d1, d2) = ((fm / fp).arg(), (fq / fm).arg());
                if (d1.abs() < limit && d2.abs() < limit) || depth > 40 {
                    total += d1 + d2;
                } else {
                    stack.push((m, q, fm, fq, depth + 1));
                    stack.push((p, m, fp, fm, depth + 1));
                }
            }
        }
    }
    (total / std::f64::consts::TAU).round() as i64
}

/// Cell-centred raster of `Re s_dom` over `[0, τ_max]²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominantSurface {
    pub tau_max: f64,
    pub h: f64,
    pub cells: usize,
    /// Row-major (`j * cells + i`); `None` where the search failed.
    pub roots: Vec<Option<DominantRoot>>,
}

impl DominantSurface {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn re(&self, i: usize, j: usize) -> Option<f64> {
        self.roots[self.index(i, j)].map(|r| r.s.re)
    }

    pub fn missing(&self) -> usize {
        self.roots.iter().filter(|r| r.is_none()).count()
    }

    /// CSV rows `tau1,tau2,re_s_dom,im_s_dom,factor`; missing cells have empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau1,tau2,re_s_dom,im_s_dom,factor\n");
        for j in 0..self.cells {
            for i in 0..self.cells {
                let (x, y) = self.center(i, j);
                match self.roots[self.index(i, j)] {
                    Some(r) => {
                        let _ = writeln!(out, "{},{},{},{},{}", sig12(x), sig12(y), sig12(r.s.re), sig12(r.s.im), r.factor);
                    }
                    None => {
                        let _ = writeln!(out, "{},{},,,", sig12(x), sig12(y));
                    }
                }
            }
        }
        out
    }

    /// Heat map of `Re s_dom` with the zero level drawn between cells of
    /// opposite sign.
    pub fn to_svg(&self) -> String {
        let mut svg = Svg::new(self.tau_max, self.tau_max, "τ1 [s]", "τ2 [s]");
        let limit = self.roots.iter().flatten().map(|r| r.s.re.abs()).fold(0.0, f64::max).clamp(1e-3, 0.5);
        for j in 0..self.cells {
            for i in 0..self.cells {
                let fill = match self.re(i, j) {
                    Some(v) => diverging_color(v, limit),
                    None => "#808080".to_string(),
                };
                svg.cell(i as f64 * self.h, j as f64 * self.h, self.h, self.h, &fill);
            }
        }
        let style = SvgStyle { stroke: "black", width: 1.0 };
        let neg = |i: usize, j: usize| self.re(i, j).map(|v| v < 0.0);
        for j in 0..self.cells {
            for i in 0..self.cells {
                let here = neg(i, j);
                let (x, y) = (i as f64 * self.h, j as f64 * self.h);
                if i + 1 < self.cells && here.is_some() && neg(i + 1, j).is_some() && here != neg(i + 1, j) {
                    svg.polyline(&[(x + self.h, y), (x + self.h, y + self.h)], style);
                }
                if j + 1 < self.cells && here.is_some() && neg(i, j + 1).is_some() && here != neg(i, j + 1) {
                    svg.polyline(&[(x, y + self.h), (x + self.h, y + self.h)], style);
                }
            }
        }
        svg.finish()
    }
}

/// `Re s_dom` at every cell centre; failed cells are left empty.
pub fn dominant_surface(
    factors: &[QuasiPolynomial],
    tau_max: f64,
    h: f64,
    opts: DominantOptions,
) -> Result<DominantSurface, QprError> {
    if factors.is_empty() {
        return Err(QprError::NoFactors);
    }
    if !(h > 0.0 && h <= tau_max) {
        return Err(QprError::Region(format!("grid step {h} for τ_max {tau_max}")));
    }
    let cells = (tau_max / h).round().max(1.0) as usize;
    let roots = (0..cells * cells)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % cells, k / cells);
            dominant_root(factors, (i as f64 + 0.5) * h, (j as f64 + 0.5) * h, opts).ok()
        })
        .collect();
    Ok(DominantSurface { tau_max: cells as f64 * h, h, cells, roots })
}
