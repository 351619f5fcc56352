//! Dense matrices over [`Scalar`] with exact elimination on the exact
//! backends and partial-pivoting LU on floats.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::scalar::{Backend, Rational, Scalar, ScalarError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix entries mix the {0} and {1} backends")]
    MixedBackends(Backend, Backend),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("entry ({row},{col}) breaks skew-symmetry: a[i][j] != -a[j][i]")]
    NotSkew { row: usize, col: usize },
    #[error("diagonal entry ({0},{0}) is nonzero")]
    NonzeroDiagonal(usize),
    #[error("block split p={p}, q={q} does not satisfy n = 2p + q for n={n}")]
    BadSplit { n: usize, p: usize, q: usize },
    #[error("pfaffian minor needs an even number of indices, got {0}")]
    OddSubset(usize),
    #[error("index {index} outside 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("indices must be strictly increasing")]
    NotIncreasing,
    #[error("invalid signed permutation: {0}")]
    InvalidPermutation(String),
}

/// Row-major dense matrix whose entries share one backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    backend: Backend,
    data: Vec<Scalar>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Scalar>) -> Result<Self, MatrixError> {
        Self::with_backend(rows, cols, data, None)
    }

    /// Like [`Matrix::new`] but fixes the backend even when there are no entries.
    pub fn with_backend(
        rows: usize,
        cols: usize,
        data: Vec<Scalar>,
        backend: Option<Backend>,
    ) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::EntryCount {
                expected: rows * cols,
                got: data.len(),
            });
        }
        let backend = backend
            .or_else(|| data.first().map(Scalar::backend))
            .unwrap_or(Backend::Rational);
        if let Some(bad) = data.iter().find(|x| x.backend() != backend) {
            return Err(MatrixError::MixedBackends(backend, bad.backend()));
        }
        Ok(Matrix {
            rows,
            cols,
            backend,
            data,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        backend: Backend,
        mut f: impl FnMut(usize, usize) -> Scalar,
    ) -> Result<Self, MatrixError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::with_backend(rows, cols, data, Some(backend))
    }

    pub fn zeros(rows: usize, cols: usize, backend: Backend) -> Self {
        Matrix {
            rows,
            cols,
            backend,
            data: vec![Scalar::zero(backend); rows * cols],
        }
    }

    pub fn identity(n: usize, backend: Backend) -> Self {
        let mut m = Self::zeros(n, n, backend);
        for i in 0..n {
            m.data[i * n + i] = Scalar::one(backend);
        }
        m
    }

    pub fn from_f64(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(Scalar::Float(m[(i, j)]));
            }
        }
        Matrix {
            rows: m.nrows(),
            cols: m.ncols(),
            backend: Backend::Float,
            data,
        }
    }

    pub fn to_f64(&self) -> Result<DMatrix<f64>, MatrixError> {
        let vals = self
            .data
            .iter()
            .map(Scalar::to_float)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &vals))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Scalar) {
        assert_eq!(value.backend(), self.backend, "backend mismatch in Matrix::set");
        self.data[i * self.cols + j] = value;
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            backend: self.backend,
            data,
        }
    }

    fn same_backend(&self, other: &Matrix) -> Result<(), MatrixError> {
        if self.backend != other.backend {
            return Err(ScalarError::BackendMismatch(self.backend, other.backend).into());
        }
        Ok(())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_backend(other)?;
        if self.cols != other.rows {
            return Err(MatrixError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols, self.backend);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Scalar::zero(self.backend);
                for k in 0..self.cols {
                    let a = self.get(i, k);
                    let b = other.get(k, j);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc = &acc + &(a * b);
                }
                out.data[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(&Scalar, &Scalar) -> Scalar) -> Result<Matrix, MatrixError> {
        self.same_backend(other)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatrixError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            backend: self.backend,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            backend: self.backend,
            data: self.data.iter().map(|x| -x).collect(),
        }
    }

    pub fn scale(&self, c: &Scalar) -> Result<Matrix, MatrixError> {
        let data = self
            .data
            .iter()
            .map(|x| x.try_mul(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            backend: self.backend,
            data,
        })
    }

    /// Copy of the `h x w` block whose top-left corner is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, h: usize, w: usize) -> Matrix {
        let mut data = Vec::with_capacity(h * w);
        for i in r0..r0 + h {
            for j in c0..c0 + w {
                data.push(self.get(i, j).clone());
            }
        }
        Matrix {
            rows: h,
            cols: w,
            backend: self.backend,
            data,
        }
    }

    /// Assemble from a grid of blocks; every block row must share a height and
    /// every block column a width.
    pub fn from_blocks(blocks: &[Vec<&Matrix>]) -> Result<Matrix, MatrixError> {
        let first = blocks
            .first()
            .and_then(|r| r.first())
            .ok_or_else(|| MatrixError::Dimension("empty block grid".into()))?;
        let backend = first.backend;
        let heights: Vec<usize> = blocks.iter().map(|r| r[0].rows).collect();
        let widths: Vec<usize> = blocks[0].iter().map(|b| b.cols).collect();
        let rows = heights.iter().sum();
        let cols = widths.iter().sum();
        let mut out = Matrix::zeros(rows, cols, backend);
        let mut r0 = 0;
        for (bi, brow) in blocks.iter().enumerate() {
            if brow.len() != widths.len() {
                return Err(MatrixError::Dimension("ragged block grid".into()));
            }
            let mut c0 = 0;
            for (bj, b) in brow.iter().enumerate() {
                if b.rows != heights[bi] || b.cols != widths[bj] {
                    return Err(MatrixError::Dimension(format!("block ({bi},{bj}) has the wrong shape")));
                }
                if b.backend != backend && !b.data.is_empty() {
                    return Err(ScalarError::BackendMismatch(backend, b.backend).into());
                }
                for i in 0..b.rows {
                    for j in 0..b.cols {
                        out.data[(r0 + i) * cols + c0 + j] = b.get(i, j).clone();
                    }
                }
                c0 += b.cols;
            }
            r0 += heights[bi];
        }
        Ok(out)
    }

    /// Determinant: fraction-free (Bareiss) elimination for rationals,
    /// division-free cofactor expansion memoized over column subsets for
    /// polynomials, LU with partial pivoting for floats.
    pub fn determinant(&self) -> Result<Scalar, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(match self.backend {
            Backend::Rational => Scalar::Rational(self.det_bareiss()),
            Backend::Float => Scalar::Float(det_lu(&self.to_f64()?)),
            Backend::Polynomial => self.det_cofactor(),
        })
    }

    fn det_bareiss(&self) -> Rational {
        let n = self.rows;
        if n == 0 {
            return Rational::one();
        }
        let mut a: Vec<Vec<Rational>> = (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j).as_rational().unwrap().clone()).collect())
            .collect();
        let mut sign = Rational::one();
        let mut prev = Rational::one();
        for k in 0..n - 1 {
            if a[k][k].is_zero() {
                match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                    Some(r) => {
                        a.swap(k, r);
                        sign = -sign;
                    }
                    None => return Rational::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                    a[i][j] = v;
                }
            }
            prev = a[k][k].clone();
        }
        sign * &a[n - 1][n - 1]
    }

    fn det_cofactor(&self) -> Scalar {
        let n = self.rows;
        let mut memo: HashMap<u64, Scalar> = HashMap::new();
        self.cofactor_rec(0, (1u64 << n) - 1, &mut memo)
    }

    /// Determinant of rows `row..n` against the columns in `cols`.
    fn cofactor_rec(&self, row: usize, cols: u64, memo: &mut HashMap<u64, Scalar>) -> Scalar {
        if cols == 0 {
            return Scalar::one(self.backend);
        }
        if let Some(v) = memo.get(&cols) {
            return v.clone();
        }
        let mut acc = Scalar::zero(self.backend);
        let mut position = 0;
        for c in 0..self.cols {
            if cols & (1 << c) == 0 {
                continue;
            }
            let a = self.get(row, c);
            if !a.is_zero() {
                let minor = self.cofactor_rec(row + 1, cols & !(1 << c), memo);
                let term = a * &minor;
                acc = if position % 2 == 0 { &acc + &term } else { &acc - &term };
            }
            position += 1;
        }
        memo.insert(cols, acc.clone());
        acc
    }

    /// Inverse by Gauss-Jordan elimination (rational and float backends).
    pub fn inverse(&self) -> Result<Matrix, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        match self.backend {
            Backend::Float => {
                let m = self.to_f64()?;
                let inv = m.try_inverse().ok_or(MatrixError::Singular)?;
                Ok(Matrix::from_f64(&inv))
            }
            Backend::Rational => self.inverse_exact(),
            Backend::Polynomial => Err(ScalarError::Unsupported(Backend::Polynomial).into()),
        }
    }

    fn inverse_exact(&self) -> Result<Matrix, MatrixError> {
        let n = self.rows;
        let mut a: Vec<Vec<Rational>> = (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j).as_rational().unwrap().clone()).collect())
            .collect();
        let mut inv: Vec<Vec<Rational>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
            .collect();
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&x, &y| a[x][k].abs().cmp(&a[y][k].abs()))
                .filter(|&r| !a[r][k].is_zero())
                .ok_or(MatrixError::Singular)?;
            a.swap(k, pivot);
            inv.swap(k, pivot);
            let p = a[k][k].recip();
            for j in 0..n {
                a[k][j] *= &p;
                inv[k][j] *= &p;
            }
            for i in 0..n {
                if i == k || a[i][k].is_zero() {
                    continue;
                }
                let f = a[i][k].clone();
                for j in 0..n {
                    let (ak, ik) = (a[k][j].clone(), inv[k][j].clone());
                    a[i][j] -= &f * ak;
                    inv[i][j] -= &f * ik;
                }
            }
        }
        let data = inv.into_iter().flatten().map(Scalar::Rational).collect();
        Matrix::new(n, n, data)
    }
}

/// Determinant of a float matrix via LU with partial pivoting.
pub fn det_lu(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.rows {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str("[")?;
            for j in 0..self.cols {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            f.write_str("]")?;
        }
        f.write_str("]")
    }
}
