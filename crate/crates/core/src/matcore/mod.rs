//! Small dense real matrices.
//!
//! Everything the control stack needs for `n <= 8` problems: products, LU
//! solves with partial pivoting, Kronecker products, norms and singular
//! values. Storage is row-major (`data[i * cols + j]`). Column vectors are
//! plain `n x 1` matrices.
//!
//! Constructors reject non-finite entries, so a `Mat` in hand is always
//! finite. Arithmetic that could overflow reports [`MatError::NonFinite`].

mod svd;

pub use svd::{svd_values, JACOBI_MAX_SWEEPS};

use std::fmt;

use thiserror::Error;

/// Pivot magnitudes below `PIVOT_RELATIVE_TOL * max|a_ij|` are treated as zero.
pub const PIVOT_RELATIVE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("dimension mismatch in {op}: left is {left:?}, right is {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is singular to working precision at pivot {pivot} (|pivot| = {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    BadLength {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("Jacobi SVD did not converge after {sweeps} sweeps (off-diagonal ratio {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },
    #[error("matrix is not symmetric positive definite (failed at diagonal {index})")]
    NotPositiveDefinite { index: usize },
}

pub type Result<T> = std::result::Result<T, MatError>;

#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:e}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mat {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MatError::Empty { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MatError::BadLength {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MatError::NonFinite {
                context: "matrix constructor",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices. All rows must have equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(MatError::BadLength {
                    rows: r,
                    cols: c,
                    expected: r * c,
                    got: data.len() + row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    /// Column vector from a slice.
    pub fn col(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(MatError::Empty { rows: 0, cols: 0 });
        }
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m.check_finite("diag")?;
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(MatError::NonFinite { context })
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

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        mat_mul(self, other)
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Result<Mat> {
        let m = Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        };
        m.check_finite("scale")?;
        Ok(m)
    }

    /// `self + s * other`, checked for shape and finiteness.
    pub fn add_scaled(&self, other: &Mat, s: f64) -> Result<Mat> {
        self.zip_with(other, "add_scaled", |a, b| a + s * b)
    }

    fn zip_with(&self, other: &Mat, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.shape() != other.shape() {
            return Err(MatError::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let m = Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        };
        m.check_finite(op)?;
        Ok(m)
    }

    /// `(self + selfᵀ) / 2`.
    pub fn symmetrize(&self) -> Result<Mat> {
        if !self.is_square() {
            return Err(MatError::NotSquare {
                op: "symmetrize",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(s)
    }

    /// Largest |a_ij − a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows.min(self.cols) {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Mat) -> Result<Mat> {
        hstack(&[self, other])
    }

    /// Copy of the column block `[start, start + width)`.
    pub fn columns(&self, start: usize, width: usize) -> Mat {
        assert!(
            width > 0 && start + width <= self.cols,
            "column block out of range"
        );
        let mut out = Mat::zeros(self.rows, width);
        for i in 0..self.rows {
            for j in 0..width {
                out[(i, j)] = self[(i, start + j)];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Euclidean norm of all entries; same as Frobenius, named for vectors.
    pub fn norm2(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn inverse(&self) -> Result<Mat> {
        let n = self.rows;
        solve_linear(self, &Mat::identity(n))
    }

    pub fn determinant(&self) -> Result<f64> {
        match Lu::factor(self) {
            Ok(lu) => Ok(lu.determinant()),
            Err(MatError::Singular { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Cholesky factor `L` with `self = L Lᵀ`; fails unless symmetric positive definite.
    pub fn cholesky(&self) -> Result<Mat> {
        if !self.is_square() {
            return Err(MatError::NotSquare {
                op: "cholesky",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if self.asymmetry() > 1e-10 * scale {
            return Err(MatError::NotPositiveDefinite { index: 0 });
        }
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(MatError::NotPositiveDefinite { index: j });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_ok()
    }
}

/// Standard matrix product.
pub fn mat_mul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(MatError::DimensionMismatch {
            op: "mat_mul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out.check_finite("mat_mul")?;
    Ok(out)
}

/// Horizontal concatenation of blocks with equal row counts.
pub fn hstack(blocks: &[&Mat]) -> Result<Mat> {
    let first = blocks.first().ok_or(MatError::Empty { rows: 0, cols: 0 })?;
    let rows = first.rows;
    let cols: usize = blocks.iter().map(|b| b.cols).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        if b.rows != rows {
            return Err(MatError::DimensionMismatch {
                op: "hstack",
                left: (rows, offset),
                right: b.shape(),
            });
        }
        for i in 0..rows {
            for j in 0..b.cols {
                out[(i, offset + j)] = b[(i, j)];
            }
        }
        offset += b.cols;
    }
    Ok(out)
}

/// Vertical concatenation of column vectors (or blocks with equal column counts).
pub fn vstack(blocks: &[&Mat]) -> Result<Mat> {
    let first = blocks.first().ok_or(MatError::Empty { rows: 0, cols: 0 })?;
    let cols = first.cols;
    let mut data = Vec::new();
    let mut rows = 0;
    for b in blocks {
        if b.cols != cols {
            return Err(MatError::DimensionMismatch {
                op: "vstack",
                left: (rows, cols),
                right: b.shape(),
            });
        }
        data.extend_from_slice(&b.data);
        rows += b.rows;
    }
    Mat::new(rows, cols, data)
}

/// Kronecker product, `(a.rows * b.rows) x (a.cols * b.cols)`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows * b.rows, a.cols * b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn frobenius_norm(a: &Mat) -> f64 {
    // scaled to avoid overflow for large entries
    let scale = a.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let ss: f64 = a.data.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * ss.sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat) -> Result<f64> {
    Ok(svd_values(a)?.first().copied().unwrap_or(0.0))
}

/// Spectral norm for matrices up to 2x2, computed by the same Jacobi route.
pub fn spectral_norm_2x2(a: &Mat) -> Result<f64> {
    if a.rows > 2 || a.cols > 2 {
        return Err(MatError::DimensionMismatch {
            op: "spectral_norm_2x2",
            left: a.shape(),
            right: (2, 2),
        });
    }
    spectral_norm(a)
}

/// LU factorisation with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(MatError::NotSquare {
                op: "lu",
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let threshold = PIVOT_RELATIVE_TOL * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pmag <= threshold || pmag == 0.0 {
                return Err(MatError::Singular {
                    pivot: k,
                    magnitude: pmag,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.rows).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }

    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        let n = self.lu.rows;
        if b.rows != n {
            return Err(MatError::DimensionMismatch {
                op: "lu_solve",
                left: self.lu.shape(),
                right: b.shape(),
            });
        }
        let mut x = Mat::zeros(n, b.cols);
        for c in 0..b.cols {
            let mut y: Vec<f64> = self.perm.iter().map(|&p| b[(p, c)]).collect();
            for i in 0..n {
                let mut s = y[i];
                for k in 0..i {
                    s -= self.lu[(i, k)] * y[k];
                }
                y[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in (i + 1)..n {
                    s -= self.lu[(i, k)] * y[k];
                }
                y[i] = s / self.lu[(i, i)];
            }
            for (i, v) in y.into_iter().enumerate() {
                x[(i, c)] = v;
            }
        }
        x.check_finite("lu_solve")?;
        Ok(x)
    }
}

/// Solves `a x = b` by LU with partial pivoting plus one step of iterative refinement.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(MatError::NotSquare {
            op: "solve_linear",
            rows: a.rows,
            cols: a.cols,
        });
    }
    if b.rows != a.rows {
        return Err(MatError::DimensionMismatch {
            op: "solve_linear",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let lu = Lu::factor(a)?;
    let x = lu.solve(b)?;
    let r = b.sub(&mat_mul(a, &x)?)?;
    let dx = lu.solve(&r)?;
    x.add(&dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    fn a_ghx() -> Mat {
        m(&[&[-1.27006037e-03, 0.0], &[-1.67511974, -4.89615042e-03]])
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            Mat::new(1, 1, vec![f64::NAN]),
            Err(MatError::NonFinite { .. })
        ));
        assert!(matches!(
            Mat::new(0, 2, vec![]),
            Err(MatError::Empty { .. })
        ));
        assert!(matches!(
            Mat::new(2, 2, vec![1.0; 3]),
            Err(MatError::BadLength { .. })
        ));
    }

    #[test]
    fn identity_product() {
        let a = m(&[&[1.0, -2.0], &[0.5, 7.0]]);
        assert_eq!(mat_mul(&Mat::identity(2), &a).unwrap(), a);
        assert_eq!(mat_mul(&a_ghx(), &Mat::identity(2)).unwrap(), a_ghx());
    }

    #[test]
    fn hand_product() {
        let p = mat_mul(&m(&[&[1.0, 2.0], &[3.0, 4.0]]), &m(&[&[0.0], &[1.0]])).unwrap();
        assert_eq!(p, m(&[&[2.0], &[4.0]]));
    }

    #[test]
    fn product_dimension_mismatch() {
        let err = mat_mul(&Mat::zeros(2, 3), &Mat::zeros(2, 3)).unwrap_err();
        assert!(matches!(
            err,
            MatError::DimensionMismatch { op: "mat_mul", .. }
        ));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = m(&[&[3.0], &[-1.5]]);
        assert_eq!(solve_linear(&Mat::identity(2), &b).unwrap(), b);
        let x = solve_linear(&m(&[&[2.0, 0.0], &[0.0, 4.0]]), &m(&[&[2.0], &[8.0]])).unwrap();
        assert_eq!(x, m(&[&[1.0], &[2.0]]));
    }

    #[test]
    fn solve_ghx_input_matrix_residual() {
        let b = m(&[&[-0.00083076, 0.00462962], &[0.51405729, 0.57604899]]);
        let d_tilde = m(&[&[0.0], &[0.5 * 0.68611759]]);
        let x = solve_linear(&b, &d_tilde).unwrap();
        let r = mat_mul(&b, &x).unwrap().sub(&d_tilde).unwrap();
        assert!(r.frobenius_norm() <= 1e-10 * d_tilde.frobenius_norm().max(1.0));
    }

    #[test]
    fn singular_reports_pivot() {
        let err = solve_linear(&m(&[&[1.0, 2.0], &[2.0, 4.0]]), &Mat::zeros(2, 1)).unwrap_err();
        assert!(
            matches!(err, MatError::Singular { pivot: 1, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn kron_cases() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(kron(&Mat::identity(1), &a), a);
        assert_eq!(
            kron(&m(&[&[1.0, 0.0], &[0.0, 2.0]]), &m(&[&[3.0]])),
            m(&[&[3.0, 0.0], &[0.0, 6.0]])
        );
        let k = kron(&a, &Mat::identity(2));
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(2, 0)], 3.0);
        assert_eq!(k[(3, 1)], 3.0);
        assert_eq!(k[(2, 1)], 0.0);
    }

    #[test]
    fn norms() {
        assert!((frobenius_norm(&Mat::identity(2)) - 2f64.sqrt()).abs() < 1e-15);
        let s = spectral_norm_2x2(&Mat::scaled_identity(2, 0.8)).unwrap();
        assert!((s - 0.8).abs() < 1e-15);
        assert!(spectral_norm_2x2(&Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn determinant_and_inverse() {
        let a = m(&[&[4.0, 7.0], &[2.0, 6.0]]);
        assert!((a.determinant().unwrap() - 10.0).abs() < 1e-12);
        let inv = a.inverse().unwrap();
        let eye = mat_mul(&a, &inv).unwrap();
        assert!(eye.sub(&Mat::identity(2)).unwrap().max_abs() < 1e-14);
        assert_eq!(m(&[&[1.0, 2.0], &[2.0, 4.0]]).determinant().unwrap(), 0.0);
    }

    #[test]
    fn cholesky_detects_indefinite() {
        assert!(m(&[&[2.0, 1.0], &[1.0, 2.0]]).is_positive_definite());
        assert!(!m(&[&[1.0, 2.0], &[2.0, 1.0]]).is_positive_definite());
        assert!(!m(&[&[1.0, 0.5], &[0.0, 1.0]]).is_positive_definite());
    }

    #[test]
    fn stacking() {
        let a = Mat::col(&[1.0, 2.0]).unwrap();
        let b = Mat::col(&[3.0]).unwrap();
        let v = vstack(&[&a, &b]).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0]);
        let h = hstack(&[&Mat::identity(2), &a]).unwrap();
        assert_eq!(h.shape(), (2, 3));
        assert_eq!(h.columns(2, 1), a);
    }
}
