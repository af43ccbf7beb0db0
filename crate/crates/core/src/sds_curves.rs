//! Building curves in the spectral delay space and their back-transform to
//! kernel and offspring curves in the delay plane.
//!
//! At `s = iω` every factor becomes a polynomial in `ω` whose coefficients
//! depend on the spectral delays `ν_k = τ_k ω` only through `e^{-iν_k}`.
//! A pair `(ν1, ν2)` carries an imaginary root iff the real and imaginary
//! parts of that polynomial share a real root `ω`, i.e. iff their Sylvester
//! resultant vanishes. The resultant is sampled over the `2π × 2π` building
//! block, its zero set is contoured and every contour vertex is refined to an
//! exact `(ν1, ν2, ω)` triple.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctcr_map::{root_tendency, DelayIndex};
use crate::factorization::QuasiPolynomial;
use crate::poly::Poly;

/// Crossings at lower frequencies are dropped (their delay image is unbounded).
pub const OMEGA_MIN: f64 = 1e-6;
pub const DEFAULT_RESOLUTION: usize = 2000;
pub const MIN_RESOLUTION: usize = 360;
/// Relative residual a vertex must meet: `|q(iω)| < RESIDUAL_TOL * scale`.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Bisection stops once the bracket is narrower than this (radians).
pub const BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdsError {
    #[error("degenerate point: both polynomials vanish identically")]
    Degenerate,
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION} grid points per axis")]
    Resolution(usize),
    #[error("maximum delay must be positive, got {0}")]
    TauMax(f64),
}

/// One imaginary-root point of the building curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdsPoint {
    pub nu1: f64,
    pub nu2: f64,
    pub omega: f64,
}

/// Real (`f`) and imaginary (`g`) parts of `q(iω)` after the half-angle
/// tangent substitution `z_k = tan(ν_k / 2)`, with the positive denominators
/// `(1 + z1²)^a (1 + z2²)^b` cleared.
pub fn frequency_polynomials(qp: &QuasiPolynomial, z1: f64, z2: f64) -> (Poly, Poly) {
    let (a_max, b_max) = qp.max_multiplicities();
    // e^{-iν} = (1 - iz) / (1 + iz)
    let u1 = Complex64::new(1.0, -z1);
    let u2 = Complex64::new(1.0, -z2);
    term_weighted_polynomials(qp, |a, b| {
        u1.powu(u32::from(a_max + a))
            * u1.conj().powu(u32::from(a_max - a))
            * u2.powu(u32::from(b_max + b))
            * u2.conj().powu(u32::from(b_max - b))
    })
}

/// Same polynomials with unit phasors `e^{-iν_k}` (no denominators). This is
/// [`frequency_polynomials`] scaled by the positive factor
/// `cos(ν1/2)^{2a} cos(ν2/2)^{2b}`, and stays finite at `ν_k = π`.
pub fn spectral_polynomials(qp: &QuasiPolynomial, nu1: f64, nu2: f64) -> (Poly, Poly) {
    let e1 = Complex64::from_polar(1.0, -nu1);
    let e2 = Complex64::from_polar(1.0, -nu2);
    term_weighted_polynomials(qp, |a, b| e1.powu(u32::from(a)) * e2.powu(u32::from(b)))
}

fn term_weighted_polynomials(qp: &QuasiPolynomial, weight: impl Fn(u8, u8) -> Complex64) -> (Poly, Poly) {
    let len = qp.terms.iter().map(|t| t.coeffs.len()).max().unwrap_or(0);
    let mut c = vec![Complex64::new(0.0, 0.0); len];
    for t in &qp.terms {
        let w = weight(t.tau1, t.tau2);
        let mut ik = Complex64::new(1.0, 0.0);
        for (k, &p) in t.coeffs.iter().enumerate() {
            c[k] += w * ik * p;
            ik *= Complex64::i();
        }
    }
    (
        Poly::new(c.iter().map(|z| z.re).collect()),
        Poly::new(c.iter().map(|z| z.im).collect()),
    )
}

/// Sylvester-matrix determinant of `f` and `g` at their actual degrees.
/// Zero iff the two share a root over the complex numbers.
pub fn resultant(f: &Poly, g: &Poly) -> Result<f64, SdsError> {
    match (f.degree(), g.degree()) {
        (None, None) => Err(SdsError::Degenerate),
        (None, Some(d)) | (Some(d), None) => Ok(if d == 0 { 1.0 } else { 0.0 }),
        (Some(m), Some(n)) => Ok(sylvester_determinant(&f.coeffs, &g.coeffs, m, n)),
    }
}

/// Determinant of the `(m + n)` square Sylvester matrix for formal degrees
/// `m` of `f` and `n` of `g` (ascending coefficient slices, zero-padded).
pub fn sylvester_determinant(f: &[f64], g: &[f64], m: usize, n: usize) -> f64 {
    let size = m + n;
    if size == 0 {
        return 1.0;
    }
    let coeff = |c: &[f64], k: usize| c.get(k).copied().unwrap_or(0.0);
    let mut a = vec![0.0; size * size];
    for row in 0..n {
        for k in 0..=m {
            a[row * size + row + k] = coeff(f, m - k);
        }
    }
    for row in 0..m {
        for k in 0..=n {
            a[(n + row) * size + row + k] = coeff(g, n - k);
        }
    }
    crate::linalg::determinant(a, size)
}

/// Precomputed complex coefficients `i^k p_ab,k` so the building-block scan
/// only multiplies phasors.
struct SpectralForm {
    terms: Vec<(u8, u8, Vec<Complex64>)>,
    len: usize,
    order: usize,
    /// Lines `ν1 = θ` on which `q(0) = 0`: there `ω = 0` is a common root of
    /// both parts and the resultant vanishes identically.
    degenerate: Vec<f64>,
}

impl SpectralForm {
    fn new(qp: &QuasiPolynomial) -> Self {
        let terms: Vec<_> = qp
            .terms
            .iter()
            .map(|t| {
                let mut ik = Complex64::new(1.0, 0.0);
                let c = t
                    .coeffs
                    .iter()
                    .map(|&p| {
                        let v = ik * p;
                        ik *= Complex64::i();
                        v
                    })
                    .collect();
                (t.tau1, t.tau2, c)
            })
            .collect();
        let len = qp.terms.iter().map(|t| t.coeffs.len()).max().unwrap_or(0);
        // q(0) ∝ Π (1 - λ e^{-iν1}) over the generating eigenvalue(s)
        let mut degenerate = Vec::new();
        if (qp.lambda.norm() - 1.0).abs() < 1e-9 {
            let theta = qp.lambda.arg().rem_euclid(TAU);
            degenerate.push(theta);
            if qp.order == 4 {
                degenerate.push((-qp.lambda.arg()).rem_euclid(TAU));
            }
        }
        Self { terms, len, order: qp.order, degenerate }
    }

    /// The resultant with its simple zeros on the degenerate lines divided
    /// out, so its sign only changes across building curves.
    fn sampled_at(&self, nu1: f64, p1: &[Complex64; 3], p2: &[Complex64; 3]) -> f64 {
        let mut divisor = 1.0;
        for &theta in &self.degenerate {
            let d = ((nu1 - theta) / 2.0).sin();
            if d.abs() < 1e-9 {
                // on the line itself: take the one-sided limit from inside the block
                let nudged = if nu1 < std::f64::consts::PI { nu1 + 1e-7 } else { nu1 - 1e-7 };
                return self.sampled_at(nudged, &phasor_powers(nudged), p2);
            }
            divisor *= d;
        }
        self.resultant_at(p1, p2) / divisor
    }

    fn sampled(&self, nu1: f64, nu2: f64) -> f64 {
        self.sampled_at(nu1, &phasor_powers(nu1), &phasor_powers(nu2))
    }

    /// Coefficients of `q(iω)` in powers of `ω` for the given phasor powers.
    fn coefficients(&self, p1: &[Complex64; 3], p2: &[Complex64; 3], out: &mut [Complex64; 5]) {
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (a, b, c) in &self.terms {
            let w = p1[*a as usize] * p2[*b as usize];
            for (k, v) in c.iter().enumerate() {
                out[k] += w * v;
            }
        }
    }

    fn resultant_at(&self, p1: &[Complex64; 3], p2: &[Complex64; 3]) -> f64 {
        let mut c = [Complex64::new(0.0, 0.0); 5];
        self.coefficients(p1, p2, &mut c);
        let mut f = [0.0; 5];
        let mut g = [0.0; 5];
        for k in 0..self.len {
            f[k] = c[k].re;
            g[k] = c[k].im;
        }
        sylvester_determinant(&f[..self.len], &g[..self.len], self.order, self.order)
    }

    /// `Q(ω; ν1, ν2)` and its partials in `ω`, `ν1`, `ν2`.
    fn eval(&self, omega: f64, nu1: f64, nu2: f64) -> [Complex64; 4] {
        let p1 = phasor_powers(nu1);
        let p2 = phasor_powers(nu2);
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (a, b, c) in &self.terms {
            let w = p1[*a as usize] * p2[*b as usize];
            let val = c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, v| acc * omega + v);
            let wv = w * val;
            out[0] += wv;
            out[1] += w * poly_derivative(c, omega);
            out[2] += wv * Complex64::new(0.0, -f64::from(*a));
            out[3] += wv * Complex64::new(0.0, -f64::from(*b));
        }
        out
    }
}

fn poly_derivative(c: &[Complex64], x: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in c.iter().enumerate().skip(1).rev() {
        acc = acc * x + v * k as f64;
    }
    acc
}

fn phasor_powers(nu: f64) -> [Complex64; 3] {
    let e = Complex64::from_polar(1.0, -nu);
    [Complex64::new(1.0, 0.0), e, e * e]
}

/// Counters reported alongside traced curves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    /// Sign changes of the resultant found on grid edges.
    pub brackets: usize,
    /// Brackets whose recovered `ω` failed validation (includes the mirror
    /// branches with `ω < 0`).
    pub rejected: usize,
    /// Interior dead ends joined across a gap.
    pub repaired_gaps: usize,
}

/// Building curves of one factor as polylines in the `[0, 2π]²` block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildingCurves {
    pub resolution: usize,
    pub polylines: Vec<Vec<SdsPoint>>,
    /// Branch id of every polyline; polylines joined across the block
    /// edges (the curves live on a torus) share an id.
    pub branch_of: Vec<usize>,
    pub diagnostics: TraceDiagnostics,
}

impl BuildingCurves {
    pub fn branch_count(&self) -> usize {
        let mut ids: Vec<_> = self.branch_of.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn points(&self) -> impl Iterator<Item = &SdsPoint> {
        self.polylines.iter().flatten()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    /// between grid nodes (i, j) and (i + 1, j): ν2 fixed
    H(u32, u32),
    /// between grid nodes (i, j) and (i, j + 1): ν1 fixed
    V(u32, u32),
}

/// Traces the building curves of `qp` on a `resolution × resolution` grid.
pub fn trace_building_curves(qp: &QuasiPolynomial, resolution: usize) -> Result<BuildingCurves, SdsError> {
    if resolution < MIN_RESOLUTION {
        return Err(SdsError::Resolution(resolution));
    }
    let form = SpectralForm::new(qp);
    let n = resolution;
    let step = TAU / n as f64;
    let node = |k: usize| if k == n { TAU } else { k as f64 * step };
    let powers: Vec<[Complex64; 3]> = (0..=n).map(|k| phasor_powers(node(k))).collect();

    // sign of the resultant at every node; row j holds ν2 = node(j)
    let stride = n + 1;
    let mut positive = vec![false; stride * stride];
    positive.par_chunks_mut(stride).enumerate().for_each(|(j, row)| {
        for (i, cell) in row.iter_mut().enumerate() {
            // the last column/row repeats the first one exactly (periodicity)
            let (ii, jj) = (i % n, j % n);
            *cell = form.sampled_at(node(i), &powers[ii], &powers[jj]) >= 0.0;
        }
    });
    let pos = |i: usize, j: usize| positive[j * stride + i];

    let mut edges = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            if i < n && pos(i, j) != pos(i + 1, j) {
                edges.push(Edge::H(i as u32, j as u32));
            }
            if j < n && pos(i, j) != pos(i, j + 1) {
                edges.push(Edge::V(i as u32, j as u32));
            }
        }
    }

    let refined: Vec<Option<SdsPoint>> = edges
        .par_iter()
        .map(|&e| refine_edge(&form, qp, e, &node, &pos))
        .collect();
    let index: HashMap<Edge, usize> = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let rejected = refined.iter().filter(|p| p.is_none()).count();

    // marching squares: connect crossings within each cell
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); edges.len()];
    let connect = |a: usize, b: usize, links: &mut Vec<Vec<usize>>| {
        links[a].push(b);
        links[b].push(a);
    };
    for j in 0..n {
        for i in 0..n {
            let (iu, ju) = (i as u32, j as u32);
            let cand = [
                Edge::H(iu, ju),
                Edge::V(iu + 1, ju),
                Edge::H(iu, ju + 1),
                Edge::V(iu, ju),
            ];
            let hits: Vec<usize> = cand.iter().filter_map(|e| index.get(e).copied()).collect();
            match hits.len() {
                2 => connect(hits[0], hits[1], &mut links),
                4 => {
                    // bottom, right, top, left
                    let pairing = resolve_saddle(&form, &refined, &hits, node(i) + 0.5 * step, node(j) + 0.5 * step, pos(i, j));
                    for (a, b) in pairing {
                        connect(a, b, &mut links);
                    }
                }
                _ => {}
            }
        }
    }

    // drop links between invalid vertices or across an ω jump
    for a in 0..links.len() {
        let keep: Vec<usize> = links[a]
            .iter()
            .copied()
            .filter(|&b| match (refined[a], refined[b]) {
                (Some(p), Some(q)) => omega_compatible(p.omega, q.omega, step, 1.0),
                _ => false,
            })
            .collect();
        links[a] = keep;
    }

    let repaired = repair_gaps(&edges, &refined, &mut links, n, step);
    let chains = collect_chains(&refined, &links);

    let mut polylines: Vec<Vec<SdsPoint>> = chains
        .iter()
        .map(|c| c.iter().map(|&v| refined[v].expect("chains hold valid vertices")).collect())
        .collect();
    for line in polylines.iter_mut() {
        snap_to_boundary(&form, qp, line, step);
        densify(&form, qp, line, step);
    }

    // torus identification: a vertex on ν = 0 is the same point as on ν = 2π
    let mut uf = UnionFind::new(polylines.len());
    let ends: Vec<(usize, SdsPoint)> = polylines
        .iter()
        .enumerate()
        .flat_map(|(c, l)| [(c, l[0]), (c, l[l.len() - 1])])
        .filter(|(_, p)| on_boundary(p))
        .collect();
    for (k, &(c1, p1)) in ends.iter().enumerate() {
        for &(c2, p2) in &ends[k + 1..] {
            if same_torus_point(&p1, &p2) && omega_compatible(p1.omega, p2.omega, step, 0.1) {
                uf.union(c1, c2);
            }
        }
    }

    let mut roots: Vec<usize> = (0..polylines.len()).map(|c| uf.find(c)).collect();
    let mut relabel = HashMap::new();
    for r in roots.iter_mut() {
        let next = relabel.len();
        *r = *relabel.entry(*r).or_insert(next);
    }
    Ok(BuildingCurves {
        resolution,
        polylines,
        branch_of: roots,
        diagnostics: TraceDiagnostics {
            brackets: edges.len(),
            rejected,
            repaired_gaps: repaired,
        },
    })
}

/// Whether two crossing frequencies a grid step or so apart can lie on the
/// same branch; `tol_factor` scales the allowance.
fn omega_compatible(a: f64, b: f64, step: f64, tol_factor: f64) -> bool {
    (a - b).abs() <= tol_factor * (0.05 * a.max(b) + 10.0 * step)
}

fn refine_edge(
    form: &SpectralForm,
    qp: &QuasiPolynomial,
    edge: Edge,
    node: &impl Fn(usize) -> f64,
    pos: &impl Fn(usize, usize) -> bool,
) -> Option<SdsPoint> {
    let (fixed, mut lo, mut hi, lo_positive, free_is_nu1) = match edge {
        Edge::H(i, j) => {
            let (i, j) = (i as usize, j as usize);
            (node(j), node(i), node(i + 1), pos(i, j), true)
        }
        Edge::V(i, j) => {
            let (i, j) = (i as usize, j as usize);
            (node(i), node(j), node(j + 1), pos(i, j), false)
        }
    };
    let eval = |free: f64| {
        let r = if free_is_nu1 {
            form.sampled(free, fixed)
        } else {
            form.sampled(fixed, free)
        };
        r >= 0.0
    };
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if eval(mid) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let free = 0.5 * (lo + hi);
    let (nu1, nu2) = if free_is_nu1 { (free, fixed) } else { (fixed, free) };
    let omega = recover_omega(qp, nu1, nu2)?;
    let (nu1, nu2, omega) = polish(form, nu1, nu2, omega, free_is_nu1).unwrap_or((nu1, nu2, omega));
    let point = SdsPoint { nu1, nu2, omega };
    (omega > OMEGA_MIN && residual_ok(qp, &point)).then_some(point)
}

/// Real common root `ω > OMEGA_MIN` of the frequency polynomials at a
/// resultant zero: roots of the imaginary part, checked against the real part.
fn recover_omega(qp: &QuasiPolynomial, nu1: f64, nu2: f64) -> Option<f64> {
    let (f, g) = spectral_polynomials(qp, nu1, nu2);
    let (solve, check) = if g.norm() < 1e-12 * f.norm() { (&f, &g) } else { (&g, &f) };
    let roots = solve.real_roots(1e-6).ok()?;
    roots
        .into_iter()
        .filter(|&w| w > OMEGA_MIN)
        .map(|w| {
            let natural: f64 = check.coeffs.iter().enumerate().map(|(k, c)| c.abs() * w.powi(k as i32)).sum();
            (w, check.eval(w).abs() / natural.max(f64::MIN_POSITIVE))
        })
        .filter(|&(_, rel)| rel < 1e-6)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(w, _)| w)
}

/// Newton on the complex equation `Q(ω; ν1, ν2) = 0` in the free spectral
/// delay and `ω`, the grid coordinate held fixed.
fn polish(form: &SpectralForm, nu1: f64, nu2: f64, omega: f64, free_is_nu1: bool) -> Option<(f64, f64, f64)> {
    newton(form, nu1, nu2, omega, free_is_nu1, 1e-6)
}

fn newton(form: &SpectralForm, nu1: f64, nu2: f64, omega: f64, free_is_nu1: bool, max_move: f64) -> Option<(f64, f64, f64)> {
    let (mut n1, mut n2, mut w) = (nu1, nu2, omega);
    for _ in 0..12 {
        let [q, dw, d1, d2] = form.eval(w, n1, n2);
        let dn = if free_is_nu1 { d1 } else { d2 };
        let det = dn.re * dw.im - dw.re * dn.im;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let step_n = (-q.re * dw.im + dw.re * q.im) / det;
        let step_w = (-dn.re * q.im + q.re * dn.im) / det;
        if free_is_nu1 {
            n1 += step_n;
        } else {
            n2 += step_n;
        }
        w += step_w;
        if step_n.abs() < 1e-15 && step_w.abs() < 1e-15 * w.abs().max(1.0) {
            break;
        }
    }
    let moved = (n1 - nu1).abs() + (n2 - nu2).abs() + (w - omega).abs() / omega.max(1.0);
    (moved < max_move && w.is_finite()).then_some((n1, n2, w))
}

/// Fills repaired gaps with points solved on the curve itself, one per grid
/// step along the dominant direction of the gap.
fn densify(form: &SpectralForm, qp: &QuasiPolynomial, line: &mut Vec<SdsPoint>, step: f64) {
    let mut out = Vec::with_capacity(line.len());
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        out.push(a);
        let (d1, d2) = (b.nu1 - a.nu1, b.nu2 - a.nu2);
        let span = d1.abs().max(d2.abs());
        if span <= 1.5 * step {
            continue;
        }
        let pieces = (span / step).ceil() as usize;
        let free_is_nu1 = d2.abs() >= d1.abs();
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            let guess = (a.nu1 + t * d1, a.nu2 + t * d2, a.omega + t * (b.omega - a.omega));
            if let Some((n1, n2, om)) = newton(form, guess.0, guess.1, guess.2, free_is_nu1, 2.0 * step) {
                let p = SdsPoint { nu1: n1, nu2: n2, omega: om };
                if om > OMEGA_MIN && residual_ok(qp, &p) {
                    out.push(p);
                }
            }
        }
    }
    out.extend(line.last().copied());
    *line = out;
}

const BOUNDARY_EPS: f64 = 1e-12;

fn on_boundary(p: &SdsPoint) -> bool {
    [p.nu1, p.nu2].iter().any(|&v| v <= BOUNDARY_EPS || v >= TAU - BOUNDARY_EPS)
}

fn same_torus_point(a: &SdsPoint, b: &SdsPoint) -> bool {
    let d = |x: f64, y: f64| {
        let r = (x - y).rem_euclid(TAU);
        r.min(TAU - r)
    };
    d(a.nu1, b.nu1) < 1e-6 && d(a.nu2, b.nu2) < 1e-6
}

/// Extends a polyline whose end stops within a few cells of the block edge
/// (the contour can miss the last cell when the curve meets the edge at a
/// grid node) by solving for the point on the edge itself.
fn snap_to_boundary(form: &SpectralForm, qp: &QuasiPolynomial, line: &mut Vec<SdsPoint>, step: f64) {
    for front in [true, false] {
        let end = if front { line[0] } else { line[line.len() - 1] };
        if on_boundary(&end) {
            continue;
        }
        let reach = 3.0 * step;
        let mut best: Option<SdsPoint> = None;
        for (value, nu1_fixed) in [(0.0, true), (TAU, true), (0.0, false), (TAU, false)] {
            let gap = if nu1_fixed { (end.nu1 - value).abs() } else { (end.nu2 - value).abs() };
            if gap > reach {
                continue;
            }
            let (n1, n2) = if nu1_fixed { (value, end.nu2) } else { (end.nu1, value) };
            // the free coordinate is the one not pinned to the edge
            let Some((n1, n2, w)) = newton(form, n1, n2, end.omega, !nu1_fixed, 2.0 * reach) else {
                continue;
            };
            let p = SdsPoint { nu1: n1, nu2: n2, omega: w };
            let inside = (0.0..=TAU).contains(&n1) && (0.0..=TAU).contains(&n2);
            if inside && w > OMEGA_MIN && residual_ok(qp, &p) && omega_compatible(w, end.omega, step, 1.0) {
                best = Some(p);
                break;
            }
        }
        if let Some(p) = best {
            if front {
                line.insert(0, p);
            } else {
                line.push(p);
            }
        }
    }
}

/// The vertex invariant: `|q(iω, ν1/ω, ν2/ω)| < 1e-8 · Σ|p_ab(iω)|`.
pub fn residual_ok(qp: &QuasiPolynomial, p: &SdsPoint) -> bool {
    let s = Complex64::new(0.0, p.omega);
    let e = qp.evaluate_full(s, p.nu1 / p.omega, p.nu2 / p.omega);
    e.value.norm() < RESIDUAL_TOL * e.scale
}

/// Pairs the four crossings of a saddle cell. Crossings of two different
/// branches (distinct `ω`) are paired by frequency, true saddles by the
/// sign at the cell center.
fn resolve_saddle(
    form: &SpectralForm,
    refined: &[Option<SdsPoint>],
    hits: &[usize],
    c1: f64,
    c2: f64,
    corner_positive: bool,
) -> Vec<(usize, usize)> {
    let (b, r, t, l) = (hits[0], hits[1], hits[2], hits[3]);
    let options = [[(b, r), (t, l)], [(b, l), (t, r)], [(b, t), (l, r)]];
    let mismatch = |(x, y): (usize, usize)| match (refined[x], refined[y]) {
        (Some(p), Some(q)) => (p.omega - q.omega).abs() / p.omega.max(q.omega),
        _ => 0.0,
    };
    let valid: Vec<usize> = hits.iter().copied().filter(|&h| refined[h].is_some()).collect();
    if valid.len() == 2 {
        // a real-frequency branch crossing its own mirror image (ω < 0)
        let invalid: Vec<usize> = hits.iter().copied().filter(|&h| refined[h].is_none()).collect();
        return vec![(valid[0], valid[1]), (invalid[0], invalid[1])];
    }
    if valid.len() == 4 {
        let scored: Vec<f64> = options.iter().map(|o| mismatch(o[0]).max(mismatch(o[1]))).collect();
        let best = (0..3).min_by(|&x, &y| scored[x].total_cmp(&scored[y])).unwrap();
        if scored[best] < 0.05 && (0..3).filter(|&k| scored[k] < 0.05).count() == 1 {
            return options[best].to_vec();
        }
    }
    // corner (i, j) is bottom-left; if the center shares its sign the
    // bottom-left and top-right corners connect through the middle
    let center_positive = form.sampled(c1, c2) >= 0.0;
    if center_positive == corner_positive {
        options[0].to_vec()
    } else {
        options[1].to_vec()
    }
}

/// Joins interior dead ends that clearly continue each other (same branch
/// frequency, a few cells apart). Returns the number of joins.
fn repair_gaps(edges: &[Edge], refined: &[Option<SdsPoint>], links: &mut [Vec<usize>], n: usize, step: f64) -> usize {
    let on_boundary = |e: Edge| match e {
        Edge::V(i, _) => i == 0 || i as usize == n,
        Edge::H(_, j) => j == 0 || j as usize == n,
    };
    let ends: Vec<usize> = (0..edges.len())
        .filter(|&v| refined[v].is_some() && links[v].len() < 2 && !on_boundary(edges[v]))
        .collect();
    let reach = 6.0 * step;
    let mut candidates = Vec::new();
    for (k, &a) in ends.iter().enumerate() {
        let pa = refined[a].unwrap();
        for &b in &ends[k + 1..] {
            if links[a].contains(&b) {
                continue;
            }
            let pb = refined[b].unwrap();
            let d = ((pa.nu1 - pb.nu1).powi(2) + (pa.nu2 - pb.nu2).powi(2)).sqrt();
            if d < reach && omega_compatible(pa.omega, pb.omega, step, 1.0) {
                candidates.push((d, a, b));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut joined = 0;
    for (_, a, b) in candidates {
        if links[a].len() < 2 && links[b].len() < 2 && (!same_chain(links, a, b) || chain_len(links, a) > 8) {
            links[a].push(b);
            links[b].push(a);
            joined += 1;
        }
    }
    joined
}

fn chain_len(links: &[Vec<usize>], a: usize) -> usize {
    let mut prev = usize::MAX;
    let mut cur = a;
    let mut len = 1;
    while let Some(next) = links[cur].iter().copied().find(|&x| x != prev) {
        if next == a {
            break;
        }
        prev = cur;
        cur = next;
        len += 1;
    }
    len
}

fn same_chain(links: &[Vec<usize>], a: usize, b: usize) -> bool {
    // walk from a along its (at most one) link until the chain ends
    let mut prev = usize::MAX;
    let mut cur = a;
    loop {
        let next = links[cur].iter().copied().find(|&x| x != prev);
        match next {
            Some(x) if x == b => return true,
            Some(x) if x == a => return false,
            Some(x) => {
                prev = cur;
                cur = x;
            }
            None => return false,
        }
    }
}

fn collect_chains(refined: &[Option<SdsPoint>], links: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut used = vec![false; refined.len()];
    let mut chains = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| {
        let mut chain = vec![start];
        used[start] = true;
        let mut prev = usize::MAX;
        let mut cur = start;
        while let Some(next) = links[cur].iter().copied().find(|&x| x != prev && !used[x]) {
            used[next] = true;
            chain.push(next);
            prev = cur;
            cur = next;
        }
        // close loops so every segment is present
        if chain.len() > 2 && links[cur].contains(&start) {
            chain.push(start);
        }
        chain
    };
    for v in 0..refined.len() {
        if refined[v].is_some() && !used[v] && links[v].len() < 2 {
            chains.push(walk(v, &mut used));
        }
    }
    for v in 0..refined.len() {
        if refined[v].is_some() && !used[v] {
            chains.push(walk(v, &mut used));
        }
    }
    chains
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// A vertex of a kernel or offspring curve in the delay plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayVertex {
    pub tau1: f64,
    pub tau2: f64,
    pub omega: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub rt1: i8,
    pub rt2: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayPolyline {
    pub branch: usize,
    /// Offspring indices; `(0, 0)` is the kernel.
    pub j1: u32,
    pub j2: u32,
    pub vertices: Vec<DelayVertex>,
}

impl DelayPolyline {
    pub fn is_kernel(&self) -> bool {
        self.j1 == 0 && self.j2 == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelaySpaceCurves {
    pub tau_max: f64,
    pub polylines: Vec<DelayPolyline>,
    /// Vertices discarded because `ω < OMEGA_MIN`.
    pub dropped_low_frequency: usize,
}

impl DelaySpaceCurves {
    pub fn kernel(&self) -> impl Iterator<Item = &DelayPolyline> {
        self.polylines.iter().filter(|p| p.is_kernel())
    }

    pub fn offspring(&self) -> impl Iterator<Item = &DelayPolyline> {
        self.polylines.iter().filter(|p| !p.is_kernel())
    }

    /// Every segment as a pair of consecutive vertices.
    pub fn segments(&self) -> impl Iterator<Item = (&DelayVertex, &DelayVertex)> {
        self.polylines
            .iter()
            .flat_map(|p| p.vertices.windows(2).map(|w| (&w[0], &w[1])))
    }

    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.vertices.len()).sum()
    }

    /// CSV rows `branch_id,nu1,nu2,omega,tau1,tau2,rt1,rt2` (12 significant digits).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("branch_id,j1,j2,nu1,nu2,omega,tau1,tau2,rt1,rt2\n");
        for p in &self.polylines {
            for v in &p.vertices {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    p.branch,
                    p.j1,
                    p.j2,
                    sig12(v.nu1),
                    sig12(v.nu2),
                    sig12(v.omega),
                    sig12(v.tau1),
                    sig12(v.tau2),
                    v.rt1,
                    v.rt2
                );
            }
        }
        out
    }
}

/// Formats with 12 significant digits.
pub fn sig12(v: f64) -> String {
    format!("{:.11e}", v)
}

/// Maps building curves to the delay plane: kernel `(ν1/ω, ν2/ω)` plus the
/// offspring `(τ1 + 2πj1/ω, τ2 + 2πj2/ω)`, clipped to `[0, τ_max]²` segment by
/// segment. Root tendencies are evaluated at every emitted vertex.
pub fn kernel_and_offspring(
    qp: &QuasiPolynomial,
    curves: &BuildingCurves,
    tau_max: f64,
) -> Result<DelaySpaceCurves, SdsError> {
    if !(tau_max > 0.0) {
        return Err(SdsError::TauMax(tau_max));
    }
    let mut dropped = 0;
    let mut polylines = Vec::new();
    for (line, &branch) in curves.polylines.iter().zip(&curves.branch_of) {
        // split where the frequency is too low to map
        let mut runs: Vec<Vec<SdsPoint>> = vec![Vec::new()];
        for p in line {
            if p.omega < OMEGA_MIN {
                dropped += 1;
                runs.push(Vec::new());
            } else {
                runs.last_mut().unwrap().push(*p);
            }
        }
        for run in runs.into_iter().filter(|r| r.len() >= 2) {
            let w_max = run.iter().map(|p| p.omega).fold(0.0, f64::max);
            let j_max = (tau_max * w_max / TAU).ceil() as u32;
            for j1 in 0..=j_max {
                for j2 in 0..=j_max {
                    let verts: Vec<(f64, f64, &SdsPoint)> = run
                        .iter()
                        .map(|p| {
                            (
                                (p.nu1 + TAU * f64::from(j1)) / p.omega,
                                (p.nu2 + TAU * f64::from(j2)) / p.omega,
                                p,
                            )
                        })
                        .collect();
                    for piece in clip_runs(&verts, tau_max) {
                        let vertices = piece
                            .iter()
                            .map(|&(tau1, tau2, p)| {
                                let rt1 = root_tendency(qp, tau1, tau2, p.omega, DelayIndex::Tau1).unwrap_or(0);
                                let rt2 = root_tendency(qp, tau1, tau2, p.omega, DelayIndex::Tau2).unwrap_or(0);
                                DelayVertex { tau1, tau2, omega: p.omega, nu1: p.nu1, nu2: p.nu2, rt1, rt2 }
                            })
                            .collect();
                        polylines.push(DelayPolyline { branch, j1, j2, vertices });
                    }
                }
            }
        }
    }
    Ok(DelaySpaceCurves { tau_max, polylines, dropped_low_frequency: dropped })
}

/// Keeps maximal runs of segments whose bounding box meets `[0, τ_max]²`.
fn clip_runs<'a>(verts: &[(f64, f64, &'a SdsPoint)], tau_max: f64) -> Vec<Vec<(f64, f64, &'a SdsPoint)>> {
    let mut out = Vec::new();
    let mut cur: Vec<(f64, f64, &SdsPoint)> = Vec::new();
    for w in verts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let keep = a.0.min(b.0) <= tau_max && a.1.min(b.1) <= tau_max;
        if keep {
            if cur.is_empty() {
                cur.push(a);
            }
            cur.push(b);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
