//! Small dense linear algebra: a row-major real matrix and an eigenvalue
//! solver (balancing, Hessenberg reduction, Francis double-shift QR).
//!
//! Sizes here are tiny (agent counts, companion matrices of degree <= 8), so
//! everything is plain `Vec<f64>` without blocking.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum QR sweeps spent on a single eigenvalue before giving up.
pub const MAX_QR_ITERATIONS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("eigenvalue iteration did not converge after {iterations} QR sweeps ({remaining} eigenvalues unresolved)")]
    NoConvergence { iterations: usize, remaining: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows; panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "row {i} has {} entries, expected {n}", row.len());
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Eigenvalues of the matrix in no particular order. Complex eigenvalues
    /// come out as exact conjugate pairs (upper member first).
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>, EigenError> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(EigenError::NonFinite);
        }
        let mut a = self.clone();
        a.balance();
        a.reduce_to_hessenberg();
        a.hessenberg_qr()
    }

    /// Parlett-Reinsch balancing with radix 2 (exact in floating point).
    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let n = self.n;
        let sqrdx = RADIX * RADIX;
        let mut done = false;
        while !done {
            done = true;
            for i in 0..n {
                let mut c = 0.0;
                let mut r = 0.0;
                for j in 0..n {
                    if j != i {
                        c += self[(j, i)].abs();
                        r += self[(i, j)].abs();
                    }
                }
                if c == 0.0 || r == 0.0 {
                    continue;
                }
                let s = c + r;
                let mut f = 1.0;
                let mut g = r / RADIX;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let ginv = 1.0 / f;
                    for j in 0..n {
                        self[(i, j)] *= ginv;
                    }
                    for j in 0..n {
                        self[(j, i)] *= f;
                    }
                }
            }
        }
    }

    /// Gaussian elimination with pivoting to upper Hessenberg form.
    fn reduce_to_hessenberg(&mut self) {
        let n = self.n;
        for m in 1..n.saturating_sub(1) {
            let mut x = 0.0_f64;
            let mut piv = m;
            for j in m..n {
                if self[(j, m - 1)].abs() > x.abs() {
                    x = self[(j, m - 1)];
                    piv = j;
                }
            }
            if piv != m {
                for j in (m - 1)..n {
                    self.data.swap(piv * n + j, m * n + j);
                }
                for j in 0..n {
                    self.data.swap(j * n + piv, j * n + m);
                }
            }
            if x != 0.0 {
                for i in (m + 1)..n {
                    let mut y = self[(i, m - 1)];
                    if y != 0.0 {
                        y /= x;
                        self[(i, m - 1)] = y;
                        for j in m..n {
                            let v = self[(m, j)];
                            self[(i, j)] -= y * v;
                        }
                        for j in 0..n {
                            let v = self[(j, i)];
                            self[(j, m)] += y * v;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i.saturating_sub(1) {
                self[(i, j)] = 0.0;
            }
        }
    }

    /// Francis double-shift QR on an upper Hessenberg matrix.
    fn hessenberg_qr(&mut self) -> Result<Vec<Complex64>, EigenError> {
        let n = self.n;
        if n == 0 {
            return Ok(Vec::new());
        }
        // 1-based view keeps the classical index arithmetic readable.
        let at = |i: usize, j: usize| (i - 1) * n + (j - 1);
        let a = &mut self.data;
        let mut wr = vec![0.0; n + 1];
        let mut wi = vec![0.0; n + 1];

        let mut anorm = 0.0;
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm += a[at(i, j)].abs();
            }
        }

        let mut nn = n;
        let mut t = 0.0;
        let (mut p, mut q, mut r): (f64, f64, f64);
        let (mut x, mut y, mut z, mut w);
        while nn >= 1 {
            let mut its = 0;
            loop {
                let mut l = nn;
                while l >= 2 {
                    let mut s = a[at(l - 1, l - 1)].abs() + a[at(l, l)].abs();
                    if s == 0.0 {
                        s = anorm;
                    }
                    if a[at(l, l - 1)].abs() <= f64::EPSILON * s {
                        a[at(l, l - 1)] = 0.0;
                        break;
                    }
                    l -= 1;
                }
                x = a[at(nn, nn)];
                if l == nn {
                    wr[nn] = x + t;
                    wi[nn] = 0.0;
                    nn -= 1;
                    break;
                }
                y = a[at(nn - 1, nn - 1)];
                w = a[at(nn, nn - 1)] * a[at(nn - 1, nn)];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = z;
                        wi[nn] = -z;
                    }
                    nn = nn.saturating_sub(2);
                    break;
                }
                if its == MAX_QR_ITERATIONS {
                    return Err(EigenError::NoConvergence { iterations: its, remaining: nn });
                }
                if its == 10 || its == 20 {
                    // exceptional shift
                    t += x;
                    for i in 1..=nn {
                        a[at(i, i)] -= x;
                    }
                    let s = a[at(nn, nn - 1)].abs() + a[at(nn - 1, nn - 2)].abs();
                    x = 0.75 * s;
                    y = x;
                    w = -0.4375 * s * s;
                }
                its += 1;
                let mut m = nn - 2;
                loop {
                    z = a[at(m, m)];
                    r = x - z;
                    let s0 = y - z;
                    p = (r * s0 - w) / a[at(m + 1, m)] + a[at(m, m + 1)];
                    q = a[at(m + 1, m + 1)] - z - r - s0;
                    r = a[at(m + 2, m + 1)];
                    let s = p.abs() + q.abs() + r.abs();
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == l {
                        break;
                    }
                    let u = a[at(m, m - 1)].abs() * (q.abs() + r.abs());
                    let v = p.abs() * (a[at(m - 1, m - 1)].abs() + z.abs() + a[at(m + 1, m + 1)].abs());
                    if u <= f64::EPSILON * v {
                        break;
                    }
                    m -= 1;
                }
                for i in (m + 2)..=nn {
                    a[at(i, i - 2)] = 0.0;
                    if i != m + 2 {
                        a[at(i, i - 3)] = 0.0;
                    }
                }
                let mut k = m;
                while k + 1 <= nn {
                    if k != m {
                        p = a[at(k, k - 1)];
                        q = a[at(k + 1, k - 1)];
                        r = 0.0;
                        if k != nn - 1 {
                            r = a[at(k + 2, k - 1)];
                        }
                        x = p.abs() + q.abs() + r.abs();
                        if x != 0.0 {
                            p /= x;
                            q /= x;
                            r /= x;
                        }
                    }
                    let s = (p * p + q * q + r * r).sqrt().copysign(p);
                    if s != 0.0 {
                        if k == m {
                            if l != m {
                                a[at(k, k - 1)] = -a[at(k, k - 1)];
                            }
                        } else {
                            a[at(k, k - 1)] = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for j in k..=nn {
                            p = a[at(k, j)] + q * a[at(k + 1, j)];
                            if k != nn - 1 {
                                p += r * a[at(k + 2, j)];
                                a[at(k + 2, j)] -= p * z;
                            }
                            a[at(k + 1, j)] -= p * y;
                            a[at(k, j)] -= p * x;
                        }
                        let mmin = if nn < k + 3 { nn } else { k + 3 };
                        for i in l..=mmin {
                            p = x * a[at(i, k)] + y * a[at(i, k + 1)];
                            if k != nn - 1 {
                                p += z * a[at(i, k + 2)];
                                a[at(i, k + 2)] -= p * r;
                            }
                            a[at(i, k + 1)] -= p * q;
                            a[at(i, k)] -= p;
                        }
                    }
                    k += 1;
                }
            }
        }
        let mut out = Vec::with_capacity(n);
        let mut i = 1;
        while i <= n {
            if wi[i] != 0.0 && i < n && wi[i + 1] == -wi[i] {
                let upper = Complex64::new(wr[i], wi[i].abs());
                out.push(upper);
                out.push(upper.conj());
                i += 2;
            } else {
                out.push(Complex64::new(wr[i], wi[i]));
                i += 1;
            }
        }
        Ok(out)
    }
}

impl std::ops::Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Numerical rank of `m - shift*I` counted as singular values above `tol`.
pub fn shifted_rank(m: &RealMatrix, shift: Complex64, tol: f64) -> usize {
    let n = m.dim();
    let a = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let v = Complex64::new(m[(i, j)], 0.0);
        if i == j {
            v - shift
        } else {
            v
        }
    });
    a.singular_values().iter().filter(|&&s| s > tol).count()
}

/// Determinant of a small dense matrix given row-major, by partial pivoting.
pub fn determinant(mut a: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for j in col..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
            }
        }
    }
    det
}
