//! Dense real polynomials with ascending coefficients.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{EigenError, RealMatrix};

/// `coeffs[k]` multiplies `x^k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    /// Degree ignoring exactly-zero leading coefficients; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c != 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.degree().is_none()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, x: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// All complex roots (with multiplicity). Exact zero roots are split off
    /// first; the rest come from the companion matrix eigenvalues.
    pub fn roots(&self) -> Result<Vec<Complex64>, EigenError> {
        let Some(deg) = self.degree() else {
            return Ok(Vec::new());
        };
        let low = self.coeffs.iter().position(|&c| c != 0.0).unwrap_or(0);
        let mut roots = vec![Complex64::new(0.0, 0.0); low];
        let c = &self.coeffs[low..=deg];
        let m = c.len() - 1;
        if m == 0 {
            return Ok(roots);
        }
        let lead = c[m];
        let mut comp = RealMatrix::zeros(m);
        for i in 1..m {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..m {
            comp[(i, m - 1)] = -c[i] / lead;
        }
        roots.extend(comp.eigenvalues()?);
        Ok(roots)
    }

    /// Real roots: complex roots whose imaginary part is below `tol * (1 + |re|)`,
    /// polished with a few Newton steps.
    pub fn real_roots(&self, tol: f64) -> Result<Vec<f64>, EigenError> {
        let d = self.derivative();
        Ok(self
            .roots()?
            .into_iter()
            .filter(|r| r.im.abs() <= tol * (1.0 + r.re.abs()))
            .map(|r| {
                let mut x = r.re;
                for _ in 0..3 {
                    let dv = d.eval(x);
                    if dv == 0.0 {
                        break;
                    }
                    let step = self.eval(x) / dv;
                    if !step.is_finite() {
                        break;
                    }
                    x -= step;
                }
                if (x - r.re).abs() > 1e-3 * (1.0 + r.re.abs()) {
                    r.re
                } else {
                    x
                }
            })
            .collect())
    }
}
