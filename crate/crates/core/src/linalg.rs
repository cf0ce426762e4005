//! Small dense linear algebra.
//!
//! Everything the controllers need fits in matrices of a few hundred rows at
//! most, so the routines here favour directness over blocking or sparsity:
//! Gaussian elimination with partial pivoting, a scaling-and-squaring matrix
//! exponential, Kronecker products, a vectorized discrete Lyapunov solver,
//! Cholesky and Householder QR.
//!
//! All operations reject non-finite input.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular to working tolerance (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("discrete Lyapunov equation has no stabilizing solution (spectral radius >= 1)")]
    UnstableSystem,
    #[error("matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Tolerances used by the solvers in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// A pivot below `singular_pivot * max_row_norm` marks the matrix singular.
    pub singular_pivot: f64,
    /// Diagonal shift used when testing positive semidefiniteness.
    pub psd_shift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            singular_pivot: 1e-12,
            psd_shift: 1e-10,
        }
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Column vector (n x 1).
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn check_finite(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(LinalgError::NonFinite {
                row: k / self.cols.max(1),
                col: k % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "elementwise operation on mismatched shapes"
        );
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "transposed matrix-vector shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Induced 1-norm (largest absolute column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Copies the rows and columns listed in `idx` into a new square matrix.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        self.submatrix(idx, idx)
    }

    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Self {
        let mut m = Self::zeros(row_idx.len(), col_idx.len());
        for (i, &r) in row_idx.iter().enumerate() {
            for (j, &c) in col_idx.iter().enumerate() {
                m[(i, j)] = self[(r, c)];
            }
        }
        m
    }

    /// Writes `block` with its top-left corner at `(row, col)`.
    pub fn set_block(&mut self, row: usize, col: usize, block: &Self) {
        assert!(row + block.rows <= self.rows && col + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(row + i, col + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        let r: Vec<usize> = (row..row + rows).collect();
        let c: Vec<usize> = (col..col + cols).collect();
        self.submatrix(&r, &c)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

fn require_square(a: &DenseMatrix) -> Result<(), LinalgError> {
    if a.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        })
    }
}

pub fn solve_linear(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    solve_linear_with(a, b, &Tolerances::default())
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear_with(
    a: &DenseMatrix,
    b: &DenseMatrix,
    tol: &Tolerances,
) -> Result<DenseMatrix, LinalgError> {
    require_square(a)?;
    if b.rows != a.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "right-hand side has {} rows, expected {}",
            b.rows, a.rows
        )));
    }
    a.check_finite()?;
    b.check_finite()?;

    let n = a.rows;
    let k = b.cols;
    let mut m = a.clone();
    let mut x = b.clone();
    let scale = (0..n)
        .map(|i| m.row(i).iter().fold(0.0, |s: f64, v| s.max(v.abs())))
        .fold(0.0, f64::max);
    let threshold = tol.singular_pivot * scale;

    for col in 0..n {
        let (p, pivot) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= threshold || pivot == 0.0 {
            return Err(LinalgError::SingularMatrix { column: col, pivot });
        }
        if p != col {
            for j in 0..n {
                m.data.swap(col * n + j, p * n + j);
            }
            for j in 0..k {
                x.data.swap(col * k + j, p * k + j);
            }
        }
        let d = m[(col, col)];
        for r in col + 1..n {
            let factor = m[(r, col)] / d;
            if factor == 0.0 {
                continue;
            }
            m[(r, col)] = 0.0;
            for j in col + 1..n {
                m[(r, j)] -= factor * m[(col, j)];
            }
            for j in 0..k {
                x[(r, j)] -= factor * x[(col, j)];
            }
        }
    }

    for col in (0..n).rev() {
        let d = m[(col, col)];
        for j in 0..k {
            let mut s = x[(col, j)];
            for c in col + 1..n {
                s -= m[(col, c)] * x[(c, j)];
            }
            x[(col, j)] = s / d;
        }
    }
    Ok(x)
}

/// Degree of the Taylor polynomial used after scaling.
const EXPM_ORDER: usize = 13;

/// `e^a` by scaling and squaring around a fixed-order Taylor polynomial.
///
/// The matrix is scaled by `2^-s` so that its 1-norm is at most 1/2; at that
/// norm the order-13 remainder is below `1e-15` relative.
pub fn matrix_exponential(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    require_square(a)?;
    a.check_finite()?;
    let n = a.rows;
    let norm = a.norm_one();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings));

    // Horner evaluation of sum_{k<=13} A^k / k!
    let mut result = DenseMatrix::identity(n);
    for k in (1..=EXPM_ORDER).rev() {
        result = (&scaled * &result).scale(1.0 / k as f64);
        for i in 0..n {
            result[(i, i)] += 1.0;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

pub fn kronecker(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            for p in 0..b.rows {
                for q in 0..b.cols {
                    out[(i * b.rows + p, j * b.cols + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

pub fn solve_discrete_lyapunov(a: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    solve_discrete_lyapunov_with(a, q, &Tolerances::default())
}

/// Solves `a·X·aᵀ − X + q = 0` through `(a⊗a − I)·vec(X) = −vec(q)`.
///
/// Fails with [`LinalgError::UnstableSystem`] when the vectorized system is
/// singular, or when the solution has a negative diagonal for a `q` with
/// nonnegative diagonal (which only happens for an unstable `a`).
pub fn solve_discrete_lyapunov_with(
    a: &DenseMatrix,
    q: &DenseMatrix,
    tol: &Tolerances,
) -> Result<DenseMatrix, LinalgError> {
    require_square(a)?;
    require_square(q)?;
    if a.rows != q.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "a is {0}x{0} but q is {1}x{1}",
            a.rows, q.rows
        )));
    }
    a.check_finite()?;
    q.check_finite()?;
    let n = a.rows;
    let mut system = kronecker(a, a);
    for i in 0..n * n {
        system[(i, i)] -= 1.0;
    }
    let rhs = DenseMatrix::column(&q.as_slice().iter().map(|v| -v).collect::<Vec<_>>());
    let vec_x = match solve_linear_with(&system, &rhs, tol) {
        Ok(x) => x,
        Err(LinalgError::SingularMatrix { .. }) => return Err(LinalgError::UnstableSystem),
        Err(e) => return Err(e),
    };
    let x = DenseMatrix::new(n, n, vec_x.into_vec())?;
    let mut sym = x.add(&x.transpose()).scale(0.5);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = sym[(i, j)];
                sym[(j, i)] = v;
            }
        }
    }
    let q_scale = q.max_abs().max(1.0);
    let q_diag_ok = q.diagonal().iter().all(|d| *d >= 0.0);
    if q_diag_ok && sym.diagonal().iter().any(|d| *d < -tol.psd_shift * q_scale) {
        return Err(LinalgError::UnstableSystem);
    }
    Ok(sym)
}

/// Lower-triangular `L` with `L·Lᵀ = a + shift·I`.
pub fn cholesky(a: &DenseMatrix, shift: f64) -> Result<DenseMatrix, LinalgError> {
    require_square(a)?;
    a.check_finite()?;
    let n = a.rows;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + shift;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { column: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Symmetric positive semidefiniteness up to a diagonal shift.
pub fn is_positive_semidefinite(a: &DenseMatrix, shift: f64) -> bool {
    a.is_symmetric(1e-9 * a.max_abs().max(1.0)) && cholesky(a, shift).is_ok()
}

/// Complete Householder QR: returns `(Q, R)` with `Q` orthogonal `m×m` and
/// `R` upper-trapezoidal `m×n`.
pub fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let m = a.rows;
    let n = a.cols;
    let mut r = a.clone();
    let mut q = DenseMatrix::identity(m);
    let mut v = vec![0.0; m];
    for k in 0..n.min(m.saturating_sub(1)) {
        let norm = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        for i in 0..m {
            v[i] = if i < k { 0.0 } else { r[(i, k)] };
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- (I - 2vvᵀ/vᵀv) R
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i];
            }
        }
        // Q <- Q (I - 2vvᵀ/vᵀv)
        for i in 0..m {
            let dot: f64 = (k..m).map(|c| q[(i, c)] * v[c]).sum();
            let f = 2.0 * dot / vnorm2;
            for c in k..m {
                q[(i, c)] -= f * v[c];
            }
        }
        for i in k + 1..m {
            r[(i, k)] = 0.0;
        }
    }
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
        let diff = a.sub(b).max_abs();
        assert!(diff <= tol, "difference {diff:e} exceeds {tol:e}\n{a:?}\n{b:?}");
    }

    #[test]
    fn rejects_non_finite_and_ragged_input() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let b = m(&[&[1.5], &[-2.0], &[7.25]]);
        let x = solve_linear(&DenseMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_solve() {
        let a = m(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let x = solve_linear(&a, &m(&[&[2.0], &[8.0]])).unwrap();
        assert_close(&x, &m(&[&[1.0], &[2.0]]), 1e-15);
    }

    #[test]
    fn solve_needs_pivoting() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let x = solve_linear(&a, &m(&[&[3.0], &[4.0]])).unwrap();
        assert_close(&x, &m(&[&[4.0], &[3.0]]), 0.0);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(
            solve_linear(&a, &m(&[&[1.0], &[1.0]])),
            Err(LinalgError::SingularMatrix { column: 1, .. })
        ));
        assert!(matches!(
            solve_linear(&m(&[&[1.0, 2.0]]), &m(&[&[1.0]])),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        assert_close(
            &matrix_exponential(&DenseMatrix::zeros(2, 2)).unwrap(),
            &DenseMatrix::identity(2),
            0.0,
        );
    }

    #[test]
    fn exponential_of_diagonal() {
        let e = matrix_exponential(&DenseMatrix::from_diagonal(&[-0.0625 * 0.1, 0.0])).unwrap();
        assert!((e[(0, 0)] - (-0.00625f64).exp()).abs() < 1e-15);
        assert!((e[(0, 0)] - 0.993769).abs() < 1e-6);
        assert_eq!(e[(1, 1)], 1.0);
        assert_eq!(e[(0, 1)], 0.0);

        let big = matrix_exponential(&DenseMatrix::from_diagonal(&[3.0, -7.5, 0.25])).unwrap();
        for (d, v) in big.diagonal().iter().zip([3.0f64, -7.5, 0.25]) {
            assert!((d - v.exp()).abs() <= 1e-12 * v.exp().max(1.0), "{d} vs {}", v.exp());
        }
    }

    #[test]
    fn exponential_of_nilpotent() {
        let e = matrix_exponential(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert_close(&e, &m(&[&[1.0, 1.0], &[0.0, 1.0]]), 1e-15);
    }

    #[test]
    fn exponential_of_rotation_generator() {
        let t = 2.3f64;
        let e = matrix_exponential(&m(&[&[0.0, -t], &[t, 0.0]])).unwrap();
        let expected = m(&[&[t.cos(), -t.sin()], &[t.sin(), t.cos()]]);
        assert_close(&e, &expected, 1e-13);
    }

    #[test]
    fn kronecker_examples() {
        let mm = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(kronecker(&m(&[&[1.0]]), &mm), mm);
        let blk = kronecker(&DenseMatrix::identity(2), &mm);
        assert_eq!(blk.block(0, 0, 2, 2), mm);
        assert_eq!(blk.block(2, 2, 2, 2), mm);
        assert_eq!(blk.block(0, 2, 2, 2), DenseMatrix::zeros(2, 2));
        assert_eq!(
            kronecker(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), &m(&[&[2.0]])),
            m(&[&[0.0, 2.0], &[2.0, 0.0]])
        );
    }

    #[test]
    fn lyapunov_scalar_closed_form() {
        let x = solve_discrete_lyapunov(&m(&[&[0.5]]), &m(&[&[3.0]])).unwrap();
        assert!((x[(0, 0)] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_with_zero_dynamics_returns_q() {
        let q = m(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let x = solve_discrete_lyapunov(&DenseMatrix::zeros(2, 2), &q).unwrap();
        assert_close(&x, &q, 1e-15);
    }

    #[test]
    fn lyapunov_rejects_unstable_dynamics() {
        // eigenvalue product 1 makes the vectorized system singular
        assert_eq!(
            solve_discrete_lyapunov(&m(&[&[1.0]]), &m(&[&[1.0]])),
            Err(LinalgError::UnstableSystem)
        );
        assert_eq!(
            solve_discrete_lyapunov(&m(&[&[2.0]]), &m(&[&[1.0]])),
            Err(LinalgError::UnstableSystem)
        );
    }

    #[test]
    fn cholesky_and_psd() {
        let a = m(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = cholesky(&a, 0.0).unwrap();
        assert_close(&(&l * &l.transpose()), &a, 1e-14);
        assert!(is_positive_semidefinite(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), 1e-10));
        assert!(!is_positive_semidefinite(&m(&[&[1.0, 2.0], &[2.0, 1.0]]), 1e-10));
        assert!(!is_positive_semidefinite(&m(&[&[1.0, 0.5], &[0.0, 1.0]]), 1e-10));
    }

    #[test]
    fn householder_qr_reconstructs() {
        let a = m(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 4.0], &[2.0, 2.0]]);
        let (q, r) = householder_qr(&a);
        assert_close(&(&q * &r), &a, 1e-13);
        assert_close(&(&q.transpose() * &q), &DenseMatrix::identity(4), 1e-14);
        for i in 0..4 {
            for j in 0..i.min(2) {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }
}
