//! Dense symmetric positive-definite kernels.
//!
//! Everything the criterion needs reduces to Cholesky factorizations of small
//! (q ≤ a few dozen) symmetric matrices: log-determinants, solves, and traces
//! of the form `tr(S⁻¹ F Fᵀ) = ‖L⁻¹F‖²_F`. Inverses are never formed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pivots at or below this multiple of the largest diagonal entry are treated
/// as zero.
pub const PIVOT_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },
}

/// Dense row-major matrix. Only used where a general (non-symmetric) shape is
/// needed, e.g. right-hand sides for [`solve_pd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
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
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric matrix stored densely. Construction symmetrizes its input, so
/// `get(i, j) == get(j, i)` holds bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            s.data[i * dim + i] = 1.0;
        }
        s
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut s = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            s.data[i * s.dim + i] = d;
        }
        s
    }

    /// Builds `(M + Mᵀ)/2` from a square row-major array.
    pub fn from_row_major(dim: usize, data: &[f64]) -> Self {
        assert!(dim >= 1);
        assert_eq!(data.len(), dim * dim, "expected {dim}x{dim} entries");
        let mut out = vec![0.0; dim * dim];
        for i in 0..dim {
            out[i * dim + i] = data[i * dim + i];
            for j in (i + 1)..dim {
                let v = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                out[i * dim + j] = v;
                out[j * dim + i] = v;
            }
        }
        Self { dim, data: out }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix must be square");
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(dim, &flat)
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "matrix must be square");
        Self::from_row_major(m.rows(), m.as_slice())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_major(self.dim, self.dim, self.data.clone())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).fold(f64::MIN, f64::max)
    }

    pub fn scale(&self, k: f64) -> SymMatrix {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// `a·self + b·other`, entrywise.
    pub fn lin_comb(&self, a: f64, other: &SymMatrix, b: f64) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// `self += weight · v vᵀ`.
    pub fn add_outer(&mut self, weight: f64, v: &[f64]) {
        let n = self.dim;
        debug_assert_eq!(v.len(), n);
        for i in 0..n {
            let wi = weight * v[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, &vj) in row[i..].iter_mut().zip(&v[i..]) {
                *r += wi * vj;
            }
        }
        self.mirror_upper();
    }

    /// `self += weight · F Fᵀ` where `F` is given as a list of columns packed
    /// contiguously (`cols.len() == dim · k`).
    pub fn add_gram(&mut self, weight: f64, cols: &[f64]) {
        let n = self.dim;
        debug_assert_eq!(cols.len() % n, 0);
        for v in cols.chunks_exact(n) {
            for i in 0..n {
                let wi = weight * v[i];
                if wi == 0.0 {
                    continue;
                }
                let row = &mut self.data[i * n..(i + 1) * n];
                for (r, &vj) in row[i..].iter_mut().zip(&v[i..]) {
                    *r += wi * vj;
                }
            }
        }
        self.mirror_upper();
    }

    fn mirror_upper(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in (i + 1)..n {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    /// `Aᵀ · self · A` for a `dim × k` matrix `A`.
    pub fn congruence(&self, a: &Matrix) -> SymMatrix {
        assert_eq!(a.rows(), self.dim);
        let sa = self.to_matrix().matmul(a);
        SymMatrix::from_matrix(&a.transpose().matmul(&sa))
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        if rows.is_empty() {
            return Err("matrix must have at least one row".into());
        }
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(format!("matrix must be square ({} rows)", rows.len()));
        }
        Ok(SymMatrix::from_rows(&rows))
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(s: SymMatrix) -> Self {
        s.to_rows()
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

pub fn cholesky(s: &SymMatrix) -> Result<Cholesky, LinalgError> {
    let n = s.dim();
    let floor = PIVOT_FLOOR_REL * s.max_diag().max(0.0);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = s.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > floor) {
            return Err(LinalgError::Singular {
                column: j,
                pivot: d,
            });
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut v = s.get(i, j);
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            for (a, b) in ri.iter().zip(rj) {
                v -= a * b;
            }
            l[i * n + j] = v / djj;
        }
    }
    Ok(Cholesky { dim: n, l })
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim + j]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_major(self.dim, self.dim, self.l.clone())
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut v = b[i];
            for (a, y) in row.iter().zip(&b[..i]) {
                v -= a * y;
            }
            b[i] = v / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_in_place(&self, y: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= self.l[k * n + i] * y[k];
            }
            y[i] = v / self.l[i * n + i];
        }
    }

    /// Solves `S x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// `Σ_c ‖L⁻¹ f_c‖²` over packed columns, i.e. `tr(S⁻¹ F Fᵀ)`.
    /// `scratch` must hold at least `dim` values.
    pub fn inv_quad_sum(&self, cols: &[f64], scratch: &mut [f64]) -> f64 {
        let n = self.dim;
        let y = &mut scratch[..n];
        let mut total = 0.0;
        for v in cols.chunks_exact(n) {
            y.copy_from_slice(v);
            self.forward_in_place(y);
            total += y.iter().map(|t| t * t).sum::<f64>();
        }
        total
    }
}

pub fn log_det_pd(s: &SymMatrix) -> Result<f64, LinalgError> {
    Ok(cholesky(s)?.log_det())
}

/// Solves `S X = B` through the Cholesky factor of `S`.
pub fn solve_pd(s: &SymMatrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    assert_eq!(b.rows(), s.dim(), "right-hand side has wrong row count");
    let chol = cholesky(s)?;
    let (n, k) = (b.rows(), b.cols());
    let mut out = Matrix::zeros(n, k);
    let mut col = vec![0.0; n];
    for j in 0..k {
        for i in 0..n {
            col[i] = b.get(i, j);
        }
        chol.forward_in_place(&mut col);
        chol.backward_in_place(&mut col);
        for i in 0..n {
            out.set(i, j, col[i]);
        }
    }
    Ok(out)
}

/// `tr(A·B) = Σ_{i,j} A[i][j]·B[j][i]` without forming the product.
pub fn trace_prod(a: &SymMatrix, b: &SymMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "trace_prod dimension mismatch");
    let n = a.dim();
    let mut t = 0.0;
    for i in 0..n {
        for j in 0..n {
            t += a.get(i, j) * b.get(j, i);
        }
    }
    t
}

/// Inverse of a small PD matrix, used only for the m×m response-covariance
/// weights when the model is set up.
pub fn inverse_pd(s: &SymMatrix) -> Result<SymMatrix, LinalgError> {
    let x = solve_pd(s, &Matrix::identity(s.dim()))?;
    Ok(SymMatrix::from_matrix(&x))
}
