//! Dense symmetric linear algebra: Cholesky factorization, log-determinants,
//! triangular solves and determinant-lemma rank-one updates.
//!
//! Dimensions here are small (tens of variables), so everything is dense and
//! row-major. Determinants are only ever exposed in log space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot_index})")]
    NotPositiveDefinite { pivot_index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix dimension must be at least 1")]
    Empty,
}

/// Row-major dense matrix, used for feature tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    /// Copies row `i` restricted to the listed columns into `out`.
    #[inline]
    pub fn gather_row(&self, i: usize, cols: &[usize], out: &mut Vec<T>) {
        out.clear();
        let row = self.row(i);
        out.extend(cols.iter().map(|&j| row[j]));
    }

    /// `sum_j coef[j] * self[i, cols[j]]`.
    #[inline]
    pub fn dot_row(&self, i: usize, cols: &[usize], coef: &[T]) -> T {
        let row = self.row(i);
        cols.iter()
            .zip(coef)
            .fold(T::zero(), |acc, (&j, &b)| acc + row[j] * b)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Dense symmetric matrix; both triangles are stored and kept equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        Ok(Self {
            dim,
            entries: vec![T::zero(); dim * dim],
        })
    }

    pub fn identity(dim: usize) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.entries[i * dim + i] = T::one();
        }
        Ok(m)
    }

    pub fn diagonal(diag: &[T]) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(diag.len())?;
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * diag.len() + i] = d;
        }
        Ok(m)
    }

    /// Builds from row-major storage. Entries must agree with their transpose
    /// to within a relative `1e-12`; the stored matrix is the exact average.
    pub fn from_row_major(dim: usize, mut entries: Vec<T>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        if entries.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        let tol = T::lit(1e-12);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                let scale = T::one().max(a.abs()).max(b.abs());
                if !((a - b).abs() <= tol * scale) {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
                let avg = (a + b) / T::lit(2.0);
                entries[i * dim + j] = avg;
                entries[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, entries })
    }

    /// Builds from a function evaluated on the lower triangle only.
    pub fn from_lower_fn(
        dim: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                m.entries[i * dim + j] = v;
                m.entries[j * dim + i] = v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    /// Adds `weight * x xᵀ` in place.
    pub fn add_outer(&mut self, weight: T, x: &[T]) -> Result<(), LinalgError> {
        self.check_len(x.len())?;
        let d = self.dim;
        for i in 0..d {
            let wi = weight * x[i];
            for j in 0..=i {
                self.entries[i * d + j] += wi * x[j];
            }
        }
        self.mirror_lower();
        Ok(())
    }

    /// Returns `c * self + w * x xᵀ`.
    pub fn scaled_plus_outer(&self, c: T, w: T, x: &[T]) -> Result<Self, LinalgError> {
        self.check_len(x.len())?;
        let d = self.dim;
        let mut out = self.clone();
        for i in 0..d {
            for j in 0..=i {
                let v = c * self.entries[i * d + j] + w * x[i] * x[j];
                out.entries[i * d + j] = v;
                out.entries[j * d + i] = v;
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, c: T) {
        for v in &mut self.entries {
            *v *= c;
        }
    }

    pub fn add_diagonal(&mut self, lambda: T) {
        for i in 0..self.dim {
            self.entries[i * self.dim + i] += lambda;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        self.check_len(x.len())?;
        Ok((0..self.dim)
            .map(|i| {
                self.entries[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    fn mirror_lower(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..i {
                self.entries[j * d + i] = self.entries[i * d + j];
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor with its cached log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor<T> {
    dim: usize,
    lower: Vec<T>,
    log_det: T,
}

impl<T: Scalar> CholFactor<T> {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln |L Lᵀ|`.
    #[inline]
    pub fn log_det(&self) -> T {
        self.log_det
    }

    #[inline]
    pub fn lower(&self, i: usize, j: usize) -> T {
        self.lower[i * self.dim + j]
    }

    /// Solves `L z = b` (forward substitution).
    pub fn forward(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        self.check_len(b.len())?;
        let mut z = b.to_vec();
        self.forward_in_place(&mut z);
        Ok(z)
    }

    fn forward_in_place(&self, z: &mut [T]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s = row
                .iter()
                .zip(&z[..i])
                .fold(z[i], |acc, (&l, &zj)| acc - l * zj);
            z[i] = s / self.lower[i * d + i];
        }
    }

    /// `xᵀ A⁻¹ x` where `A = L Lᵀ`, via one forward substitution.
    pub fn quad_form_inv(&self, x: &[T]) -> Result<T, LinalgError> {
        let z = self.forward(x)?;
        Ok(z.iter().fold(T::zero(), |acc, &v| acc + v * v))
    }

    fn check_len(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }
}

/// Cholesky factorization `S = L Lᵀ`.
///
/// A pivot is rejected when it does not exceed the scalar's pivot tolerance
/// times the largest diagonal entry of `S`.
pub fn cholesky<T: Scalar>(s: &SymMatrix<T>) -> Result<CholFactor<T>, LinalgError> {
    let d = s.dim;
    let max_diag = (0..d).fold(T::zero(), |m, i| m.max(s.get(i, i)));
    let threshold = T::pivot_tolerance() * max_diag;
    let mut lower = vec![T::zero(); d * d];
    let mut log_det = T::zero();
    for j in 0..d {
        let mut pivot = s.get(j, j);
        for k in 0..j {
            let l = lower[j * d + k];
            pivot -= l * l;
        }
        if !(pivot > threshold) || !(pivot > T::zero()) {
            return Err(LinalgError::NotPositiveDefinite { pivot_index: j });
        }
        let ljj = pivot.sqrt();
        lower[j * d + j] = ljj;
        log_det += pivot.ln();
        for i in (j + 1)..d {
            let mut v = s.get(i, j);
            for k in 0..j {
                v -= lower[i * d + k] * lower[j * d + k];
            }
            lower[i * d + j] = v / ljj;
        }
    }
    Ok(CholFactor {
        dim: d,
        lower,
        log_det,
    })
}

/// Solves `(L Lᵀ) x = b`.
pub fn solve<T: Scalar>(f: &CholFactor<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    let mut x = f.forward(b)?;
    let d = f.dim;
    for i in (0..d).rev() {
        let mut s = x[i];
        for k in (i + 1)..d {
            s -= f.lower[k * d + i] * x[k];
        }
        x[i] = s / f.lower[i * d + i];
    }
    Ok(x)
}

/// `ln |c·A + w·x xᵀ|` for the matrix `A` factored by `f`, using the matrix
/// determinant lemma: `k ln c + ln|A| + ln(1 + (w/c) xᵀA⁻¹x)`.
pub fn logdet_rank_one<T: Scalar>(
    f: &CholFactor<T>,
    c: T,
    w: T,
    x: &[T],
) -> Result<T, LinalgError> {
    let q = f.quad_form_inv(x)?;
    Ok(T::from_count(f.dim) * c.ln() + f.log_det + (w / c * q).ln_1p())
}
