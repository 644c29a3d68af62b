//! Small dense linear algebra for the filter side.
//!
//! Everything here is sized for at most three dimensions (the constant
//! acceleration state in one axis), stored inline and never heap allocated.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Column vector with up to [`MAX_DIM`] entries.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    len: usize,
    data: [f64; MAX_DIM],
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&len),
            "vector length {len} out of range"
        );
        Self {
            len,
            data: [0.0; MAX_DIM],
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut v = Self::zeros(values.len());
        v.data[..values.len()].copy_from_slice(values);
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.len]
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len, other.len, "dot: dimension mismatch");
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scale(&self, s: f64) -> Vector {
        let mut out = *self;
        out.data.iter_mut().for_each(|x| *x *= s);
        out
    }

    /// `self * other^T`
    pub fn outer(&self, other: &Vector) -> Matrix {
        let mut m = Matrix::zeros(self.len, other.len);
        for i in 0..self.len {
            for j in 0..other.len {
                m[(i, j)] = self.data[i] * other.data[j];
            }
        }
        m
    }

    /// Leading `len` entries.
    pub fn head(&self, len: usize) -> Vector {
        assert!(len <= self.len);
        Vector::from_slice(&self.data[..len])
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        assert!(
            i < self.len,
            "index {i} out of bounds for length {}",
            self.len
        );
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        assert!(
            i < self.len,
            "index {i} out of bounds for length {}",
            self.len
        );
        &mut self.data[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(mut self, rhs: Vector) -> Vector {
        assert_eq!(self.len, rhs.len, "add: dimension mismatch");
        for i in 0..self.len {
            self.data[i] += rhs.data[i];
        }
        self
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(mut self, rhs: Vector) -> Vector {
        assert_eq!(self.len, rhs.len, "sub: dimension mismatch");
        for i in 0..self.len {
            self.data[i] -= rhs.data[i];
        }
        self
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// Row-major matrix with at most [`MAX_DIM`] rows and columns.
#[derive(Clone, Copy, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: [f64; MAX_DIM * MAX_DIM],
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&rows) && (1..=MAX_DIM).contains(&cols),
            "matrix shape {rows}x{cols} out of range"
        );
        Self {
            rows,
            cols,
            data: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(
            entries.len(),
            rows * cols,
            "entry count does not match {rows}x{cols}"
        );
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = entries[i * cols + j];
            }
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
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

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut out = *self;
        out.data.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        assert_eq!(self.cols, v.len(), "mul_vec: dimension mismatch");
        let mut out = Vector::zeros(self.rows);
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn diag(&self) -> Vector {
        assert!(self.is_square());
        let mut d = Vector::zeros(self.rows);
        for i in 0..self.rows {
            d[i] = self[(i, i)];
        }
        d
    }

    pub fn trace(&self) -> f64 {
        self.diag().as_slice().iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data[..].iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `(A + A^T) / 2`
    pub fn symmetrize(&self) -> Matrix {
        assert!(self.is_square());
        let mut out = *self;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        out
    }

    /// Top-left `n x n` block.
    pub fn top_left(&self, n: usize) -> Matrix {
        assert!(n <= self.rows && n <= self.cols);
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }

    pub fn determinant(&self) -> f64 {
        assert!(self.is_square(), "determinant of non-square matrix");
        let a = |i, j| self[(i, j)];
        match self.rows {
            1 => a(0, 0),
            2 => a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0),
            3 => {
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
            }
            _ => unreachable!(),
        }
    }

    /// Closed-form inverse. Fails when `|det| < 1e-12 * max|a_ij|^n`.
    pub fn inverse(&self) -> Result<Matrix> {
        assert!(self.is_square(), "inverse of non-square matrix");
        let n = self.rows;
        let det = self.determinant();
        let scale = self.max_abs().powi(n as i32);
        if !det.is_finite() || scale == 0.0 || det.abs() < 1e-12 * scale {
            return Err(Error::Singular);
        }
        let a = |i, j| self[(i, j)];
        let adj = match n {
            1 => Matrix::from_rows(1, 1, &[1.0]),
            2 => Matrix::from_rows(2, 2, &[a(1, 1), -a(0, 1), -a(1, 0), a(0, 0)]),
            3 => Matrix::from_rows(
                3,
                3,
                &[
                    a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1),
                    a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2),
                    a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1),
                    a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2),
                    a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0),
                    a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2),
                    a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0),
                    a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1),
                    a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0),
                ],
            ),
            _ => unreachable!(),
        };
        Ok(adj.scale(1.0 / det))
    }

    /// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Matrix> {
        self.cholesky_impl(false)
    }

    /// Cholesky factor that tolerates positive semi-definite input: pivots
    /// that are zero (within round-off) produce a zero column.
    pub fn cholesky_psd(&self) -> Result<Matrix> {
        self.cholesky_impl(true)
    }

    fn cholesky_impl(&self, allow_semidefinite: bool) -> Result<Matrix> {
        assert!(self.is_square(), "cholesky of non-square matrix");
        let n = self.rows;
        let tol = 1e-12 * self.trace().abs().max(f64::MIN_POSITIVE);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !d.is_finite() {
                return Err(Error::Singular);
            }
            if d <= tol {
                if allow_semidefinite && d > -1e-9 * self.trace().abs().max(1.0) {
                    continue;
                }
                return Err(Error::Singular);
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(l)
    }

    /// Solves `L y = b` for lower-triangular `self`.
    pub fn forward_substitute(&self, b: &Vector) -> Vector {
        assert_eq!(self.rows, b.len());
        let mut y = Vector::zeros(b.len());
        for i in 0..self.rows {
            let mut s = b[i];
            for k in 0..i {
                s -= self[(i, k)] * y[k];
            }
            y[i] = s / self[(i, i)];
        }
        y
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i},{j}) out of bounds"
        );
        &self.data[i * MAX_DIM + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(
            i < self.rows && j < self.cols,
            "index ({i},{j}) out of bounds"
        );
        &mut self.data[i * MAX_DIM + j]
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    fn mul(self, rhs: Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "mul: dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self[(i, k)] * rhs[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }
}

impl Add for Matrix {
    type Output = Matrix;
    fn add(mut self, rhs: Matrix) -> Matrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "add: dimension mismatch"
        );
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    fn sub(mut self, rhs: Matrix) -> Matrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "sub: dimension mismatch"
        );
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        self
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)]).collect())
            .collect();
        f.debug_list().entries(rows).finish()
    }
}
