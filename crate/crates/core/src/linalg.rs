//! Dense real linear algebra for desk-scale problems.
//!
//! Everything here works on row-major `f64` storage. The routines cover what
//! the solver and the iteration-matrix analysis need: products, Cholesky and
//! LU solves, symmetric eigenvalues (Householder tridiagonalization + implicit
//! QL), general eigenvalues (balancing, Householder Hessenberg reduction,
//! Francis double-shift QR) and a column-pivoted QR rank estimate.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

/// Dense vector. Kept as a plain `Vec` so callers can use slice APIs freely.
pub type Vector = Vec<f64>;

/// Relative tolerance used when checking symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default relative tolerance for [`column_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is numerically singular (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("eigenvalue iteration did not converge after {sweeps} sweeps; partial spectral radius {partial_rho}")]
    ConvergenceFailure {
        sweeps: usize,
        /// Largest modulus among the eigenvalues that did deflate.
        partial_rho: f64,
    },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from a list of rows; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    cols
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Single-column matrix.
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vector {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `selfᵀ * v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "transpose of {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        Ok(out)
    }

    /// `selfᵀ * self`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                if row[i] == 0.0 {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    /// `selfᵀ * other`.
    pub fn tr_matmul(&self, other: &Matrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "transpose of {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a = self.row(r);
            let b = other.row(r);
            for i in 0..self.cols {
                if a[i] == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a[i] * b[j];
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Symmetric to `tol` relative to the largest entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// `Some(c)` when `self` equals `c·I` up to `tol` relative to `c`.
    pub fn scalar_multiple_of_identity(&self, tol: f64) -> Option<f64> {
        if !self.is_square() || self.rows == 0 {
            return None;
        }
        let c = self[(0, 0)];
        let scale = c.abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let target = if i == j { c } else { 0.0 };
                if (self[(i, j)] - target).abs() > tol * scale {
                    return None;
                }
            }
        }
        Some(c)
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    /// Matrix power by repeated squaring.
    pub fn pow(&self, mut k: u32) -> Result<Self> {
        if !self.is_square() {
            return Err(LinalgError::InvalidInput("power of a non-square matrix".into()));
        }
        let mut base = self.clone();
        let mut acc = Self::identity(self.rows);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.matmul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base)?;
            }
        }
        Ok(acc)
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(LinalgError::InvalidInput("matrix has non-finite entries".into()))
        }
    }

    fn ensure_square(&self, what: &str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(LinalgError::InvalidInput(format!(
                "{} requires a square matrix, got {}x{}",
                what, self.rows, self.cols
            )))
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

// ---------------------------------------------------------------------------
// vector helpers

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// ---------------------------------------------------------------------------
// norms and eigenvalues

/// Spectral norm `√λ_max(MᵀM)`.
pub fn two_norm(m: &Matrix) -> Result<f64> {
    m.ensure_finite()?;
    if m.rows == 0 || m.cols == 0 {
        return Ok(0.0);
    }
    // Work with the smaller Gram matrix; both share nonzero eigenvalues.
    let g = if m.cols <= m.rows {
        m.gram()
    } else {
        m.transpose().gram()
    };
    let eig = symmetric_eigenvalues_unchecked(&g)?;
    let top = eig.iter().cloned().fold(0.0_f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    m.ensure_finite()?;
    m.ensure_square("symmetric eigensolve")?;
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(LinalgError::InvalidInput(
            "matrix is not symmetric to 1e-12 relative".into(),
        ));
    }
    symmetric_eigenvalues_unchecked(m)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_spd(m: &Matrix) -> Result<f64> {
    let eig = symmetric_eigenvalues(m)?;
    eig.first()
        .copied()
        .ok_or_else(|| LinalgError::InvalidInput("empty matrix".into()))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_sym(m: &Matrix) -> Result<f64> {
    let eig = symmetric_eigenvalues(m)?;
    eig.last()
        .copied()
        .ok_or_else(|| LinalgError::InvalidInput("empty matrix".into()))
}

fn symmetric_eigenvalues_unchecked(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    // Symmetrize to kill rounding-level asymmetry before the reduction.
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    let (mut d, mut e) = householder_tridiagonal(&mut a);
    tridiagonal_ql(&mut d, &mut e)?;
    d.sort_by(|x, y| x.total_cmp(y));
    Ok(d)
}

/// Householder reduction of a symmetric matrix to tridiagonal form
/// (eigenvalues only). Returns the diagonal and the subdiagonal, with the
/// subdiagonal stored in `e[1..n]` and `e[0] = 0`.
fn householder_tridiagonal(a: &mut [Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[i][k].abs()).sum();
            if scale == 0.0 {
                e[i] = a[i][l];
            } else {
                for k in 0..=l {
                    a[i][k] /= scale;
                    h += a[i][k] * a[i][k];
                }
                let f = a[i][l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i][l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j][k] * a[i][k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k][j] * a[i][k];
                    }
                    e[j] = g / h;
                    f_acc += e[j] * a[i][j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a[i][j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j][k] -= f * e[k] + g * a[i][k];
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a[i][i];
    }
    (d, e)
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let max_iter = 30 * n.max(1) + 30;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > max_iter {
                let partial = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                return Err(LinalgError::ConvergenceFailure {
                    sweeps: iter,
                    partial_rho: partial,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// All eigenvalues of a general real square matrix.
///
/// Balances, reduces to upper Hessenberg form with Householder reflections,
/// then runs Francis double-shift QR. A subdiagonal entry is treated as zero
/// once it falls below `1e-12·‖M‖` (or below the usual relative test against
/// its diagonal neighbours). The sweep budget is `100·n`.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    m.ensure_finite()?;
    m.ensure_square("eigenvalue computation")?;
    let n = m.rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let norm = m.frobenius_norm();
    let mut a: Vec<Vec<f64>> = m.to_rows();
    balance(&mut a);
    hessenberg_reduce(&mut a);
    hessenberg_qr(&mut a, 1e-12 * norm, 100 * n)
}

/// `max |λ|` over the (possibly complex) spectrum.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Diagonal similarity scaling by powers of two (Parlett–Reinsch).
fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.len();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
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
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut() {
                        row[i] *= f;
                    }
                }
            }
        }
    }
}

/// In-place Householder reduction to upper Hessenberg form.
fn hessenberg_reduce(a: &mut [Vec<f64>]) {
    let n = a.len();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let alpha_sq: f64 = ((k + 1)..n).map(|i| a[i][k] * a[i][k]).sum();
        let alpha = alpha_sq.sqrt();
        if alpha == 0.0 {
            continue;
        }
        let x0 = a[k + 1][k];
        let sign = if x0 >= 0.0 { 1.0 } else { -1.0 };
        for i in 0..n {
            v[i] = 0.0;
        }
        v[k + 1] = x0 + sign * alpha;
        for i in (k + 2)..n {
            v[i] = a[i][k];
        }
        let vnorm_sq: f64 = ((k + 1)..n).map(|i| v[i] * v[i]).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm_sq;
        // H A: rows k+1..n
        for j in 0..n {
            let s: f64 = ((k + 1)..n).map(|i| v[i] * a[i][j]).sum();
            let s = s * tau;
            for i in (k + 1)..n {
                a[i][j] -= s * v[i];
            }
        }
        // (H A) H: columns k+1..n
        for row in a.iter_mut() {
            let s: f64 = ((k + 1)..n).map(|j| row[j] * v[j]).sum();
            let s = s * tau;
            for j in (k + 1)..n {
                row[j] -= s * v[j];
            }
        }
        for i in (k + 2)..n {
            a[i][k] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
fn hessenberg_qr(a: &mut [Vec<f64>], abs_tol: f64, max_sweeps: usize) -> Result<Vec<Complex64>> {
    let n = a.len();
    let mut eig = vec![Complex64::new(0.0, 0.0); n];
    let mut found = vec![false; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let mut sweeps = 0usize;
    let mut its = 0usize;

    while nn >= 0 {
        let nnu = nn as usize;
        // Locate a negligible subdiagonal element.
        let mut l = nnu;
        while l >= 1 {
            let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
            if s == 0.0 {
                s = anorm;
            }
            let sub = a[l][l - 1].abs();
            if sub + s == s || sub <= abs_tol {
                a[l][l - 1] = 0.0;
                break;
            }
            l -= 1;
        }
        let x = a[nnu][nnu];
        if l == nnu {
            eig[nnu] = Complex64::new(x + t, 0.0);
            found[nnu] = true;
            nn -= 1;
            its = 0;
            continue;
        }
        let y = a[nnu - 1][nnu - 1];
        let w = a[nnu][nnu - 1] * a[nnu - 1][nnu];
        if l + 1 == nnu {
            let p = 0.5 * (y - x);
            let q = p * p + w;
            let z = q.abs().sqrt();
            let xt = x + t;
            if q >= 0.0 {
                let z = p + z.copysign(p);
                let hi = xt + z;
                let lo = if z != 0.0 { xt - w / z } else { hi };
                eig[nnu - 1] = Complex64::new(hi, 0.0);
                eig[nnu] = Complex64::new(lo, 0.0);
            } else {
                eig[nnu - 1] = Complex64::new(xt + p, z);
                eig[nnu] = Complex64::new(xt + p, -z);
            }
            found[nnu] = true;
            found[nnu - 1] = true;
            nn -= 2;
            its = 0;
            continue;
        }

        sweeps += 1;
        if sweeps > max_sweeps {
            let partial_rho = eig
                .iter()
                .zip(&found)
                .filter(|(_, &f)| f)
                .fold(0.0_f64, |acc, (z, _)| acc.max(z.norm()));
            return Err(LinalgError::ConvergenceFailure {
                sweeps: sweeps - 1,
                partial_rho,
            });
        }
        let (mut x, mut y, mut w) = (x, y, w);
        if its == 10 || its == 20 {
            // Exceptional shift.
            t += x;
            for i in 0..=nnu {
                a[i][i] -= x;
            }
            let s = a[nnu][nnu - 1].abs() + a[nnu - 1][nnu - 2].abs();
            x = 0.75 * s;
            y = x;
            w = -0.4375 * s * s;
        }
        its += 1;

        // Look for two consecutive small subdiagonal elements.
        let mut m = nnu - 2;
        let (mut p, mut q, mut r);
        loop {
            let z = a[m][m];
            let rr = x - z;
            let ss = y - z;
            p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
            q = a[m + 1][m + 1] - z - rr - ss;
            r = a[m + 2][m + 1];
            let s = p.abs() + q.abs() + r.abs();
            p /= s;
            q /= s;
            r /= s;
            if m == l {
                break;
            }
            let u = a[m][m - 1].abs() * (q.abs() + r.abs());
            let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
            if u + v == v {
                break;
            }
            m -= 1;
        }
        for i in (m + 2)..=nnu {
            a[i][i - 2] = 0.0;
            if i != m + 2 {
                a[i][i - 3] = 0.0;
            }
        }
        // Double QR step on rows l..=nn and columns m..=nn.
        let mut k = m;
        while k + 1 <= nnu {
            let mut xk = 0.0;
            if k != m {
                p = a[k][k - 1];
                q = a[k + 1][k - 1];
                r = if k + 1 != nnu { a[k + 2][k - 1] } else { 0.0 };
                xk = p.abs() + q.abs() + r.abs();
                if xk != 0.0 {
                    p /= xk;
                    q /= xk;
                    r /= xk;
                }
            }
            let s = (p * p + q * q + r * r).sqrt().copysign(p);
            if s != 0.0 {
                if k == m {
                    if l != m {
                        a[k][k - 1] = -a[k][k - 1];
                    }
                } else {
                    a[k][k - 1] = -s * xk;
                }
                p += s;
                let xs = p / s;
                let ys = q / s;
                let zs = r / s;
                q /= p;
                r /= p;
                for j in k..=nnu {
                    let mut pp = a[k][j] + q * a[k + 1][j];
                    if k + 1 != nnu {
                        pp += r * a[k + 2][j];
                        a[k + 2][j] -= pp * zs;
                    }
                    a[k + 1][j] -= pp * ys;
                    a[k][j] -= pp * xs;
                }
                let mmin = if nnu < k + 3 { nnu } else { k + 3 };
                for i in l..=mmin {
                    let mut pp = xs * a[i][k] + ys * a[i][k + 1];
                    if k + 1 != nnu {
                        pp += zs * a[i][k + 2];
                        a[i][k + 2] -= pp * r;
                    }
                    a[i][k + 1] -= pp * q;
                    a[i][k] -= pp;
                }
            }
            k += 1;
        }
    }
    Ok(eig)
}

// ---------------------------------------------------------------------------
// factorizations

/// Cholesky factor `M = LLᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &Matrix) -> Result<Self> {
        m.ensure_finite()?;
        m.ensure_square("Cholesky factorization")?;
        let n = m.rows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vector> {
        let n = self.n;
        if rhs.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs of length {} for a {}x{} factor",
                rhs.len(),
                n,
                n
            )));
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        Ok(y)
    }
}

/// Solves `Mx = rhs` for symmetric positive definite `M`.
pub fn solve_spd(m: &Matrix, rhs: &[f64]) -> Result<Vector> {
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(LinalgError::InvalidInput("matrix is not symmetric".into()));
    }
    Cholesky::factor(m)?.solve(rhs)
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &Matrix) -> Result<Self> {
        m.ensure_finite()?;
        m.ensure_square("LU factorization")?;
        let n = m.rows;
        let threshold = 1e-12 * two_norm(m)?;
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= threshold || pmax == 0.0 {
                return Err(LinalgError::Singular { pivot: k });
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let d = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vector> {
        let n = self.n;
        if rhs.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs of length {} for a {}x{} factor",
                rhs.len(),
                n,
                n
            )));
        }
        let mut y: Vector = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lu[i * n + k] * y[k];
            }
            y[i] = s / self.lu[i * n + i];
        }
        Ok(y)
    }

    /// Solves `M X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows != self.n {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} right-hand-side rows for a {}x{} factor",
                b.rows, self.n, self.n
            )));
        }
        let mut out = Matrix::zeros(self.n, b.cols);
        for c in 0..b.cols {
            let x = self.solve(&b.col(c))?;
            for (r, v) in x.into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        Ok(out)
    }
}

/// Solves `Mx = rhs` for square nonsingular `M`.
pub fn solve_general(m: &Matrix, rhs: &[f64]) -> Result<Vector> {
    Lu::factor(m)?.solve(rhs)
}

/// Numerical rank: count of `|R_kk| > tol·|R_11|` from a column-pivoted
/// Householder QR.
pub fn column_rank(m: &Matrix, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(LinalgError::InvalidInput(format!("rank tolerance {} must be positive", tol)));
    }
    m.ensure_finite()?;
    let (rows, cols) = (m.rows, m.cols);
    if rows == 0 || cols == 0 {
        return Ok(0);
    }
    let mut a = m.to_rows();
    let mut col_norms: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i][j] * a[i][j]).sum())
        .collect();
    let steps = rows.min(cols);
    let mut diag = Vec::with_capacity(steps);
    for k in 0..steps {
        // pivot: remaining column with the largest norm
        let (p, _) = (k..cols)
            .map(|j| (j, col_norms[j]))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if p != k {
            for row in a.iter_mut() {
                row.swap(k, p);
            }
            col_norms.swap(k, p);
        }
        let alpha: f64 = (k..rows).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if alpha == 0.0 {
            diag.push(0.0);
            continue;
        }
        let sign = if a[k][k] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (k..rows).map(|i| a[i][k]).collect();
        v[0] += sign * alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        let tau = 2.0 / vnorm_sq;
        for j in k..cols {
            let s: f64 = (k..rows).map(|i| v[i - k] * a[i][j]).sum::<f64>() * tau;
            for i in k..rows {
                a[i][j] -= s * v[i - k];
            }
        }
        diag.push(a[k][k].abs());
        for j in (k + 1)..cols {
            col_norms[j] = (k + 1..rows).map(|i| a[i][j] * a[i][j]).sum();
        }
    }
    let top = diag.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(diag.iter().filter(|&&d| d > tol * top).count())
}
