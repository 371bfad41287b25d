//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! Cholesky, and ridge-regularized solves.
//!
//! Everything here is sized for the handful-of-parameters systems produced by
//! the moment equations (p ≤ a few dozen), so clarity wins over blocking.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{Error, Result};

/// Relative pivot threshold used to declare rank deficiency.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Scale applied to `trace(A)/p` to obtain the default ridge.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-8;

/// Dense real vector whose entries were finite when it was built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector entry {bad}")));
        }
        Ok(Vector(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    /// Wraps entries without the finiteness check. Intended for values
    /// produced by arithmetic on already-validated inputs.
    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        Vector(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyInput);
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
        }
        Matrix::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &d) in entries.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch { expected: self.cols, found: x.len() });
        }
        let out = (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        Ok(Vector::from_vec_unchecked(out))
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Returns `self + shift·I`.
    pub fn with_added_diagonal(&self, shift: f64) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += shift;
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Symmetric to within `tol` relative to the largest entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.rows).all(|i| {
            (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale)
        })
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Default ridge for regularized retries: `1e-8 · |trace(A)| / p`.
pub fn default_ridge(a: &Matrix) -> f64 {
    DEFAULT_RIDGE_SCALE * a.trace().abs() / a.rows().max(1) as f64
}

/// LU factorization with partial pivoting, `P·A = L·U` packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    packed: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
        }
        let n = a.rows();
        let threshold = PIVOT_TOLERANCE * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (pivot_row, pivot_abs) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs <= threshold || pivot_abs == 0.0 {
                return Err(Error::SingularSystem { pivot: pivot_abs, threshold });
            }
            if pivot_row != k {
                perm.swap(k, pivot_row);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { packed: lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vector {
        let n = self.packed.rows();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.packed[(i, j)] * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| self.packed[(i, j)] * y[j]).sum();
            y[i] = (y[i] - s) / self.packed[(i, i)];
        }
        Vector::from_vec_unchecked(y)
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.packed.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Solution of a square linear system with its 1-norm condition estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub x: Vector,
    pub condition_number: f64,
}

/// Solves `(A + ridge·I) x = b` by LU with partial pivoting.
///
/// Returns [`Error::SingularSystem`] when a pivot falls below
/// `1e-12 · max|entry|`; callers retry with a positive ridge.
pub fn solve_linear(a: &Matrix, b: &[f64], ridge: f64) -> Result<LinearSolution> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
    }
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch { expected: a.rows(), found: b.len() });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Domain(format!("ridge must be non-negative, got {ridge}")));
    }
    let system = if ridge > 0.0 { a.with_added_diagonal(ridge) } else { a.clone() };
    let lu = Lu::factor(&system)?;
    let x = lu.solve(b);
    let condition_number = system.norm_one() * lu.inverse().norm_one();
    if !x.is_finite() {
        return Err(Error::NonFinite("linear solve produced non-finite values".into()));
    }
    Ok(LinearSolution { x, condition_number })
}

/// Lower-triangular Cholesky factor `A = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    /// Fails with [`Error::NotPositiveDefinite`] when a squared pivot drops
    /// to `1e-12 · max|entry|` or below.
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
        }
        let n = a.rows();
        let threshold = PIVOT_TOLERANCE * a.max_abs();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
            if d.is_nan() || d <= threshold {
                return Err(Error::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn solve(&self, b: &[f64]) -> Vector {
        let n = self.lower.rows();
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
            y[i] = (y[i] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| l[(k, i)] * y[k]).sum();
            y[i] = (y[i] - s) / l[(i, i)];
        }
        Vector::from_vec_unchecked(y)
    }

    /// Inverse of the factored matrix, symmetrized.
    pub fn inverse(&self) -> Matrix {
        let n = self.lower.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrize();
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let sol = solve_linear(&Matrix::identity(2), &[3.0, -1.0], 0.0).unwrap();
        assert_eq!(sol.x.as_slice(), &[3.0, -1.0]);
        assert!((sol.condition_number - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_system() {
        let a = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]).unwrap();
        let sol = solve_linear(&a, &[2.0, 8.0], 0.0).unwrap();
        assert_eq!(sol.x.as_slice(), &[1.0, 2.0]);
        assert!((sol.condition_number - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_is_singular() {
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let err = solve_linear(&a, &[1.0, 1.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
        // a positive ridge makes it solvable
        let sol = solve_linear(&a, &[1.0, 1.0], default_ridge(&a)).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-6 && (sol.x[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let sol = solve_linear(&a, &[5.0, 7.0], 0.0).unwrap();
        assert_eq!(sol.x.as_slice(), &[7.0, 5.0]);
    }

    #[test]
    fn dimension_errors() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(solve_linear(&a, &[1.0, 2.0], 0.0), Err(Error::DimensionMismatch { .. })));
        let a = Matrix::identity(2);
        assert!(matches!(solve_linear(&a, &[1.0], 0.0), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(solve_linear(&a, &[1.0, 1.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_row_major(1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(Matrix::from_row_major(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn cholesky_inverse() {
        let a = Matrix::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]).unwrap();
        let inv = Cholesky::factor(&a).unwrap().inverse();
        let prod = a.matmul(&inv).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expected).abs() < 1e-14);
            }
        }
        let indefinite = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert_eq!(Cholesky::factor(&indefinite).unwrap_err(), Error::NotPositiveDefinite);
    }
}
