//! Decoupling of the swarm characteristic equation into low-order
//! quasi-polynomial factors, one per real eigenvalue of `C` and one per
//! conjugate pair.
//!
//! With `n(s) = s^2 + D s + P` and `d(s) = D s e^{-τ2 s} + P e^{-τ1 s}`:
//!
//! * real `λ`: `q(s) = n(s) - λ d(s)` (order 2),
//! * pair `λ, λ̄`: `q(s) = n(s)^2 - 2 Re(λ) n(s) d(s) + |λ|^2 d(s)^2` (order 4).
//!
//! The factor for `λ = 1` is the weighted-centroid (agreement) factor; it
//! always has a root at `s = 0`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{shifted_rank, EigenError, RealMatrix};
use crate::poly::Poly;
use crate::topology::{EigenKind, Spectrum, WeightedAdjacency, CLUSTER_TOL};

/// Roots with `|Re s|` at most this are marginal rather than (un)stable.
pub const MARGIN_TOL: f64 = 1e-9;
/// Singular values below this count as rank deficiency in the defect check.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("gains must be positive and finite (P = {p}, D = {d})")]
    InvalidGains { p: f64, d: f64 },
    #[error("weighted adjacency is defective at eigenvalue {eigenvalue:.6}: algebraic multiplicity {algebraic}, geometric multiplicity {geometric}")]
    Defective {
        eigenvalue: Complex64,
        algebraic: usize,
        geometric: usize,
    },
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// PD gains: `P` on relative position, `D` on relative velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub p: f64,
    pub d: f64,
}

impl Gains {
    pub fn new(p: f64, d: f64) -> Result<Self, FactorError> {
        if p > 0.0 && d > 0.0 && p.is_finite() && d.is_finite() {
            Ok(Self { p, d })
        } else {
            Err(FactorError::InvalidGains { p, d })
        }
    }
}

/// `coeffs(s) * exp(-(tau1 * τ1 + tau2 * τ2) s)`; `coeffs` ascending in `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub tau1: u8,
    pub tau2: u8,
    pub coeffs: Vec<f64>,
}

impl Term {
    fn new(tau1: u8, tau2: u8, coeffs: Vec<f64>) -> Self {
        Self { tau1, tau2, coeffs }
    }

    #[inline]
    pub fn poly_at(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    #[inline]
    pub fn poly_derivative_at(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * s + c * k as f64;
        }
        acc
    }

    #[inline]
    pub fn delay(&self, tau1: f64, tau2: f64) -> f64 {
        f64::from(self.tau1) * tau1 + f64::from(self.tau2) * tau2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    Centroid,
    RealDisagreement,
    ComplexDisagreement,
}

/// Value of a factor and its partial derivatives at one point.
#[derive(Debug, Clone, Copy)]
pub struct FactorEval {
    pub value: Complex64,
    pub d_s: Complex64,
    pub d_tau1: Complex64,
    pub d_tau2: Complex64,
    /// `Σ |p_ab(s)| |e^{-(aτ1+bτ2)s}|`, the natural magnitude for residuals.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiPolynomial {
    pub terms: Vec<Term>,
    /// Generating eigenvalue (upper member for pairs).
    pub lambda: Complex64,
    pub kind: FactorKind,
    pub order: usize,
    pub gains: Gains,
}

impl QuasiPolynomial {
    /// Order-2 factor for a real eigenvalue.
    pub fn real(lambda: f64, gains: Gains) -> Self {
        let Gains { p, d } = gains;
        let centroid = (lambda - 1.0).abs() < CLUSTER_TOL;
        let lambda = if centroid { 1.0 } else { lambda };
        Self {
            terms: vec![
                Term::new(0, 0, vec![p, d, 1.0]),
                Term::new(1, 0, vec![-lambda * p]),
                Term::new(0, 1, vec![0.0, -lambda * d]),
            ],
            lambda: Complex64::new(lambda, 0.0),
            kind: if centroid {
                FactorKind::Centroid
            } else {
                FactorKind::RealDisagreement
            },
            order: 2,
            gains,
        }
    }

    /// Order-4 factor for a conjugate pair `λ, λ̄`.
    pub fn complex_pair(lambda: Complex64, gains: Gains) -> Self {
        let Gains { p, d } = gains;
        let r = lambda.re;
        let m = lambda.norm_sqr();
        let n = [p, d, 1.0];
        let n2 = [p * p, 2.0 * d * p, d * d + 2.0 * p, 2.0 * d, 1.0];
        Self {
            terms: vec![
                Term::new(0, 0, n2.to_vec()),
                Term::new(1, 0, n.iter().map(|c| -2.0 * r * p * c).collect()),
                Term::new(0, 1, std::iter::once(0.0).chain(n.iter().map(|c| -2.0 * r * d * c)).collect()),
                Term::new(2, 0, vec![m * p * p]),
                Term::new(1, 1, vec![0.0, 2.0 * m * d * p]),
                Term::new(0, 2, vec![0.0, 0.0, m * d * d]),
            ],
            lambda: Complex64::new(r, lambda.im.abs()),
            kind: FactorKind::ComplexDisagreement,
            order: 4,
            gains,
        }
    }

    pub fn is_centroid(&self) -> bool {
        self.kind == FactorKind::Centroid
    }

    /// Largest `(a, b)` delay multiplicities present.
    pub fn max_multiplicities(&self) -> (u8, u8) {
        self.terms
            .iter()
            .fold((0, 0), |(a, b), t| (a.max(t.tau1), b.max(t.tau2)))
    }

    /// `Σ p_ab(s) e^{-(aτ1+bτ2)s}`.
    pub fn evaluate(&self, s: Complex64, tau1: f64, tau2: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.poly_at(s) * (-s * t.delay(tau1, tau2)).exp())
            .sum()
    }

    pub fn evaluate_full(&self, s: Complex64, tau1: f64, tau2: f64) -> FactorEval {
        let zero = Complex64::new(0.0, 0.0);
        let mut out = FactorEval {
            value: zero,
            d_s: zero,
            d_tau1: zero,
            d_tau2: zero,
            scale: 0.0,
        };
        for t in &self.terms {
            let h = t.delay(tau1, tau2);
            let e = (-s * h).exp();
            let p = t.poly_at(s);
            let pe = p * e;
            out.value += pe;
            out.d_s += (t.poly_derivative_at(s) - p * h) * e;
            out.d_tau1 -= pe * s * f64::from(t.tau1);
            out.d_tau2 -= pe * s * f64::from(t.tau2);
            out.scale += p.norm() * e.norm();
        }
        out
    }

    /// The ordinary polynomial obtained at `τ1 = τ2 = 0`.
    pub fn delay_free_polynomial(&self) -> Poly {
        let len = self.terms.iter().map(|t| t.coeffs.len()).max().unwrap_or(0);
        let mut c = vec![0.0; len];
        for t in &self.terms {
            for (k, v) in t.coeffs.iter().enumerate() {
                c[k] += v;
            }
        }
        Poly::new(c)
    }

    pub fn delay_free_unstable_count(&self) -> Result<DelayFreeCount, EigenError> {
        let mut out = DelayFreeCount::default();
        for r in self.delay_free_polynomial().roots()? {
            if r.re > MARGIN_TOL {
                out.unstable += 1;
            } else if r.re.abs() <= MARGIN_TOL {
                out.marginal += 1;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayFreeCount {
    pub unstable: usize,
    pub marginal: usize,
}

/// One factor per real eigenvalue and per conjugate pair, in spectrum order.
pub fn build_factors(spectrum: &Spectrum, gains: Gains) -> Vec<QuasiPolynomial> {
    spectrum
        .representatives()
        .map(|e| match e.kind {
            EigenKind::Real => QuasiPolynomial::real(e.value.re, gains),
            _ => QuasiPolynomial::complex_pair(e.value, gains),
        })
        .collect()
}

/// Rejects adjacency matrices whose repeated eigenvalues lack a full eigenspace.
pub fn check_diagonalizable(adj: &WeightedAdjacency) -> Result<(), FactorError> {
    let n = adj.dim();
    for cluster in adj.spectrum.clusters() {
        if cluster.len() < 2 {
            continue;
        }
        let mean = cluster.iter().sum::<Complex64>() / cluster.len() as f64;
        let geometric = n - shifted_rank(&adj.matrix, mean, RANK_TOL);
        if geometric < cluster.len() {
            return Err(FactorError::Defective {
                eigenvalue: mean,
                algebraic: cluster.len(),
                geometric,
            });
        }
    }
    Ok(())
}

/// Defect check followed by [`build_factors`].
pub fn factorize(adj: &WeightedAdjacency, gains: Gains) -> Result<Vec<QuasiPolynomial>, FactorError> {
    check_diagonalizable(adj)?;
    Ok(build_factors(&adj.spectrum, gains))
}

/// Real block-diagonalizing basis `T` with `T⁻¹ C T` block diagonal and first
/// column `1/√n`. Modal coordinates are `ξ = T⁻¹ x`.
#[derive(Debug, Clone)]
pub struct ModalTransform {
    pub t: RealMatrix,
    pub t_inv: RealMatrix,
    /// Eigenvalue (upper pair member) owning each column.
    pub column_lambda: Vec<Complex64>,
}

impl ModalTransform {
    pub fn new(adj: &WeightedAdjacency) -> Result<Self, FactorError> {
        check_diagonalizable(adj)?;
        let n = adj.dim();
        let c = DMatrix::<Complex64>::from_fn(n, n, |i, j| Complex64::new(adj.matrix[(i, j)], 0.0));
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut column_lambda = Vec::with_capacity(n);
        let mut done: Vec<Complex64> = Vec::new();
        let ones = 1.0 / (n as f64).sqrt();
        for e in adj.spectrum.representatives() {
            if done.iter().any(|d| (d - e.value).norm() < CLUSTER_TOL) {
                continue;
            }
            done.push(e.value);
            let k = adj
                .spectrum
                .eigenvalues
                .iter()
                .filter(|o| (o.value - e.value).norm() < CLUSTER_TOL)
                .count();
            let mut basis = null_space(&c, e.value, k);
            if (e.value - 1.0).norm() < CLUSTER_TOL {
                // put the agreement direction first, keep the rest orthogonal to it
                let u = vec![Complex64::new(ones, 0.0); n];
                for v in basis.iter_mut() {
                    let proj: Complex64 = v.iter().zip(&u).map(|(a, b)| a * b.conj()).sum();
                    for (a, b) in v.iter_mut().zip(&u) {
                        *a -= proj * b;
                    }
                }
                basis.sort_by(|a, b| norm(b).total_cmp(&norm(a)));
                basis.truncate(k - 1);
                basis.insert(0, u);
            }
            for v in basis {
                if e.kind == EigenKind::Real {
                    // real null vectors: rotate away the arbitrary complex phase
                    let pivot = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                    let phase = pivot.conj() / pivot.norm();
                    columns.push(v.iter().map(|z| (z * phase).re).collect());
                    column_lambda.push(e.value);
                } else {
                    columns.push(v.iter().map(|z| z.re).collect());
                    columns.push(v.iter().map(|z| z.im).collect());
                    column_lambda.push(e.value);
                    column_lambda.push(e.value);
                }
            }
        }
        let mut t = RealMatrix::zeros(n);
        for (j, col) in columns.iter().enumerate() {
            for i in 0..n {
                t[(i, j)] = col[i];
            }
        }
        let inv = t
            .to_nalgebra()
            .try_inverse()
            .ok_or(FactorError::Defective {
                eigenvalue: Complex64::new(f64::NAN, 0.0),
                algebraic: n,
                geometric: 0,
            })?;
        let mut t_inv = RealMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t_inv[(i, j)] = inv[(i, j)];
            }
        }
        Ok(Self { t, t_inv, column_lambda })
    }

    /// `ξ = T⁻¹ x` for one snapshot of positions (or velocities).
    pub fn modal(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.t_inv[(i, j)] * x[j]).sum())
            .collect()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `k` orthonormal vectors spanning the (numerical) null space of `C - λI`.
fn null_space(c: &DMatrix<Complex64>, lambda: Complex64, k: usize) -> Vec<Vec<Complex64>> {
    let n = c.nrows();
    let shifted = c - DMatrix::<Complex64>::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    order
        .into_iter()
        .take(k)
        .map(|r| (0..n).map(|j| v_t[(r, j)].conj()).collect())
        .collect()
}
