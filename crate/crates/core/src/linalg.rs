//! Small dense and tridiagonal solvers, generic over the scalar type.

use std::ops::{Index, IndexMut};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            check_len(rows, c.len())?;
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
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

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.cols, x.len())?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    /// `Aᵀ x`.
    pub fn tr_mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.rows, x.len())?;
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    pub fn max_abs_diag(&self) -> T {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)].abs())
            .fold(T::zero(), T::max)
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Adds `eps` to every diagonal entry.
    pub fn add_ridge(&mut self, eps: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += eps;
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Tridiagonal matrix stored by its three diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    /// `lower[i]` couples row `i + 1` to column `i`.
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    /// `upper[i]` couples row `i` to column `i + 1`.
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        check_len(n, x.len())?;
        let mut y: Vec<T> = self.diag.iter().zip(x).map(|(&d, &v)| d * v).collect();
        for i in 0..n.saturating_sub(1) {
            y[i] += self.upper[i] * x[i + 1];
            y[i + 1] += self.lower[i] * x[i];
        }
        Ok(y)
    }

    /// Thomas algorithm without pivoting.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        check_len(n, rhs.len())?;
        check_len(n.saturating_sub(1), self.lower.len())?;
        check_len(n.saturating_sub(1), self.upper.len())?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let tiny = T::min_positive_value();
        let mut c = vec![T::zero(); n];
        let mut d = vec![T::zero(); n];
        let mut denom = self.diag[0];
        if denom.abs() <= tiny {
            return Err(Error::Singular("zero pivot in tridiagonal solve at row 0".into()));
        }
        if n > 1 {
            c[0] = self.upper[0] / denom;
        }
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if denom.abs() <= tiny || !denom.is_finite() {
                return Err(Error::Singular(format!(
                    "zero pivot in tridiagonal solve at row {i}"
                )));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / denom;
            }
            d[i] = (rhs[i] - self.lower[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            let next = d[i + 1];
            d[i] -= c[i] * next;
        }
        Ok(d)
    }
}

/// Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        check_len(n, a.cols())?;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut s = a[(j, j)];
            for k in 0..j {
                s -= l[(j, k)] * l[(j, k)];
            }
            if s <= T::zero() || !s.is_finite() {
                return Err(Error::NotPositiveDefinite(j));
            }
            let ljj = s.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.l.rows();
        check_len(n, b.len())?;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let v = self.l[(i, k)] * y[k];
                y[i] -= v;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let v = self.l[(k, i)] * y[k];
                y[i] -= v;
            }
            y[i] /= self.l[(i, i)];
        }
        Ok(y)
    }

    /// Ratio of the largest to the smallest diagonal factor entry, squared.
    pub fn condition_estimate(&self) -> T {
        let n = self.l.rows();
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for i in 0..n {
            let v = self.l[(i, i)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (hi / lo).powi(2)
    }
}

/// Solves a symmetric positive definite system.
pub fn solve_spd<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    Cholesky::factor(a)?.solve(b)
}

/// Least squares solution of `min ‖A x − b‖` by Householder QR with column pivoting.
///
/// Returns an error when the numerical rank is below the column count.
pub fn lstsq<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let (m, n) = (a.rows(), a.cols());
    check_len(m, b.len())?;
    if m < n {
        return Err(Error::Singular(format!(
            "underdetermined least squares ({m} rows, {n} columns)"
        )));
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<T> = (0..n)
        .map(|j| (0..m).map(|i| r[(i, j)] * r[(i, j)]).sum())
        .collect();
    let mut r00 = T::zero();
    let tol = T::epsilon() * T::from_usize_lossy(m.max(n)) * T::lit(10.0);

    for k in 0..n {
        let (p, _) = norms[k..]
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        let p = p + k;
        if p != k {
            for i in 0..m {
                let t = r[(i, k)];
                r[(i, k)] = r[(i, p)];
                r[(i, p)] = t;
            }
            norms.swap(k, p);
            perm.swap(k, p);
        }

        let alpha: T = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<T>().sqrt();
        if k == 0 {
            r00 = alpha;
        }
        if alpha <= tol * r00 || alpha == T::zero() {
            return Err(Error::Singular(format!(
                "rank deficient least squares: rank {k} < {n}"
            )));
        }
        let sign = if r[(k, k)] >= T::zero() { T::one() } else { -T::one() };
        let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] += sign * alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        let two = T::lit(2.0);
        for j in k..n {
            let dot: T = v.iter().enumerate().map(|(i, &vi)| vi * r[(k + i, j)]).sum();
            let s = two * dot / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                r[(k + i, j)] -= s * vi;
            }
        }
        let dot: T = v.iter().enumerate().map(|(i, &vi)| vi * rhs[k + i]).sum();
        let s = two * dot / vnorm2;
        for (i, &vi) in v.iter().enumerate() {
            rhs[k + i] -= s * vi;
        }
        for (j, nj) in norms.iter_mut().enumerate().skip(k + 1) {
            *nj = (k + 1..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
        }
    }

    let mut z = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= r[(i, j)] * z[j];
        }
        z[i] = s / r[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = z[k];
    }
    Ok(x)
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}
