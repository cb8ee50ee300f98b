use std::ops::{Index, IndexMut};

use super::Scalar;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Wraps a row-major buffer. Rejects wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadBuffer {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Mat::from_vec"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input (test helper).
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "frobenius dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (acc, &x) in out.iter_mut().zip(self.row(i)) {
                *acc += x;
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self · other^T` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let out = Self::from_fn(self.rows, other.rows, |i, j| {
            dot_slices(self.row(i), other.row(j))
        });
        finite_or(out, "matmul_t")
    }

    /// `self^T · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &bv) in out.row_mut(i).iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        finite_or(out, "t_matmul")
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn finite_or<T: Scalar>(m: Mat<T>, op: &'static str) -> Result<Mat<T>> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite(op))
    }
}

/// Standard matrix product `a · b`.
pub fn matmul<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let o_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            for (o, &bkj) in o_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    finite_or(out, "matmul")
}

/// Output of [`l2_normalize_rows`], keeping what the backward pass needs.
#[derive(Clone, Debug)]
pub struct RowNormalized<T> {
    pub matrix: Mat<T>,
    /// Euclidean norm of each input row.
    pub norms: Vec<T>,
    /// Rows whose norm fell below `eps`; these are passed through unchanged.
    pub degenerate: Vec<bool>,
}

impl<T: Scalar> RowNormalized<T> {
    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

pub fn l2_normalize_rows<T: Scalar>(m: &Mat<T>, eps: T) -> RowNormalized<T> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows);
    let mut degenerate = Vec::with_capacity(m.rows);
    for i in 0..m.rows {
        let row = out.row_mut(i);
        let norm = dot_slices(row, row).sqrt();
        norms.push(norm);
        if norm < eps {
            degenerate.push(true);
        } else {
            degenerate.push(false);
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    RowNormalized {
        matrix: out,
        norms,
        degenerate,
    }
}

/// Vector-Jacobian product of row normalization.
///
/// For `y = x / |x|`: `dx = (dy - y (y . dy)) / |x|`. Degenerate rows were
/// passed through, so their Jacobian is the identity.
pub fn normalize_rows_backward<T: Scalar>(fwd: &RowNormalized<T>, grad_out: &Mat<T>) -> Mat<T> {
    let y = &fwd.matrix;
    let mut dx = grad_out.clone();
    for i in 0..y.rows {
        if fwd.degenerate[i] {
            continue;
        }
        let yi = y.row(i);
        let proj = dot_slices(yi, grad_out.row(i));
        let inv = T::one() / fwd.norms[i];
        for (d, &yv) in dx.row_mut(i).iter_mut().zip(yi) {
            *d = (*d - yv * proj) * inv;
        }
    }
    dx
}
