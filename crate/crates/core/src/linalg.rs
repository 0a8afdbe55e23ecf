//! Small dense linear algebra: vector helpers, a row-major matrix, a one-sided
//! Jacobi SVD and a Cholesky solver. Sizes here are desk-scale (a few hundred
//! at most), so clarity wins over blocking or SIMD.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("jacobi svd did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Real>(a: &[T], k: T) -> Vec<T> {
    a.iter().map(|&x| x * k).collect()
}

/// `y + k·x`
pub fn axpy<T: Real>(k: T, x: &[T], y: &[T]) -> Vec<T> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(&xi, &yi)| yi + k * xi).collect()
}

pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y)).sqrt()
}

pub fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn all_finite<T: Real>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn mean<T: Real>(a: &[T]) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.iter().copied().sum::<T>() / T::from_usize_lossy(a.len())
}

/// Median of a sample; averages the two middle values for even lengths.
pub fn median<T: Real>(a: &[T]) -> T {
    assert!(!a.is_empty(), "median of empty slice");
    let mut v = a.to_vec();
    v.sort_by(|x, y| x.partial_cmp(y).expect("median of NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}

/// Population standard deviation.
pub fn std_dev<T: Real>(a: &[T]) -> T {
    let m = mean(a);
    let v = a.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(a.len().max(1));
    v.sqrt()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape {
                expected: format!("{} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Shape { expected: format!("rows of length {c}"), got: "ragged rows".into() });
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    /// Builds the matrix whose columns are `f(e_j)`.
    pub fn from_columns_of(cols: usize, rows: usize, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        let mut e = vec![T::zero(); cols];
        for j in 0..cols {
            e[j] = T::one();
            let col = f(&e);
            debug_assert_eq!(col.len(), rows);
            for (i, v) in col.into_iter().enumerate() {
                m.set(i, j, v);
            }
            e[j] = T::zero();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀx`
    pub fn matvec_t(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape {
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", other.rows),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// `A = U·[diag(s), 0]·Vᵀ` for a wide matrix (`rows ≤ cols`).
///
/// `s` is sorted in decreasing order; `v` is a full orthonormal basis of the
/// input space whose first `rows` columns pair with `s`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD of a wide matrix, run on the columns of `Aᵀ`.
pub fn svd_wide<T: Real>(a: &Matrix<T>) -> Result<Svd<T>, LinalgError> {
    let (m, n) = (a.rows(), a.cols());
    if m > n {
        return Err(LinalgError::Shape { expected: "rows <= cols".into(), got: format!("{m}x{n}") });
    }
    // Columns of W = Aᵀ are the rows of A.
    let mut w: Vec<Vec<T>> = (0..m).map(|i| a.row(i).to_vec()).collect();
    let mut j: Vec<Vec<T>> = (0..m)
        .map(|i| {
            let mut e = vec![T::zero(); m];
            e[i] = T::one();
            e
        })
        .collect();
    let eps = T::epsilon();
    let mut converged = m < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha = norm_sq(&w[p]);
                let beta = norm_sq(&w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut j, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..m).collect();
    let norms: Vec<T> = w.iter().map(|c| norm(c)).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).expect("finite singular values"));
    let s_max = order.first().map_or(T::zero(), |&k| norms[k]);
    let tol = T::from_usize_lossy(n.max(1)) * eps * s_max;

    let mut s = Vec::with_capacity(m);
    let mut u = Matrix::zeros(m, m);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut rank = 0;
    for (col, &k) in order.iter().enumerate() {
        let sk = if norms[k] > tol { norms[k] } else { T::zero() };
        s.push(sk);
        for (i, &v) in j[k].iter().enumerate() {
            u.set(i, col, v);
        }
        if sk > T::zero() {
            basis.push(scale(&w[k], T::one() / sk));
            rank += 1;
        }
    }
    complete_basis(&mut basis, n);
    let mut v = Matrix::zeros(n, n);
    for (col, b) in basis.iter().enumerate() {
        for (i, &x) in b.iter().enumerate() {
            v.set(i, col, x);
        }
    }
    debug_assert!(rank <= m);
    Ok(Svd { u, s, v })
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    for i in 0..cols[p].len() {
        let a = cols[p][i];
        let b = cols[q][i];
        cols[p][i] = c * a - s * b;
        cols[q][i] = s * a + c * b;
    }
}

/// Extends an orthonormal set to a basis of `R^n` by Gram-Schmidt over the
/// standard basis, orthogonalising twice for stability.
pub fn complete_basis<T: Real>(basis: &mut Vec<Vec<T>>, n: usize) {
    let mut k = 0;
    while basis.len() < n && k < n {
        let mut e = vec![T::zero(); n];
        e[k] = T::one();
        for _ in 0..2 {
            for b in basis.iter() {
                let c = dot(&e, b);
                for (ei, &bi) in e.iter_mut().zip(b) {
                    *ei = *ei - c * bi;
                }
            }
        }
        let nrm = norm(&e);
        if nrm > T::lit(1e-6) {
            basis.push(scale(&e, T::one() / nrm));
        }
        k += 1;
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::Shape { expected: "square matrix".into(), got: format!("{}x{}", n, a.cols()) });
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.get(i, j);
            for k in 0..j {
                acc = acc - l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if acc <= T::zero() || !acc.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite { row: i, pivot: acc.as_f64() });
                }
                l.set(i, i, acc.sqrt());
            } else {
                l.set(i, j, acc / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·x = b` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc = acc - l.get(i, k) * z[k];
        }
        z[i] = acc / l.get(i, i);
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in i + 1..n {
            acc = acc - l.get(k, i) * x[k];
        }
        x[i] = acc / l.get(i, i);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![1.0, 2.0, 0.0, -1.0, 0.5],
            vec![0.3, -0.7, 2.0, 1.0, 0.0],
            vec![2.0, 0.1, 0.4, 0.0, -1.2],
        ])
        .unwrap()
    }

    #[test]
    fn svd_reconstructs_and_is_orthonormal() {
        let a = wide();
        let svd = svd_wide(&a).unwrap();
        let (m, n) = (3, 5);
        let mut s = Matrix::zeros(m, n);
        for i in 0..m {
            s.set(i, i, svd.s[i]);
        }
        let rebuilt = svd.u.matmul(&s).unwrap().matmul(&svd.v.transpose()).unwrap();
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        let vtv = svd.v.transpose().matmul(&svd.v).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(n)) < 1e-12);
        let utu = svd.u.transpose().matmul(&svd.u).unwrap();
        assert!(utu.max_abs_diff(&Matrix::identity(m)) < 1e-12);
        assert!(svd.s.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn rank_deficient_rows_get_zero_singular_value() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let svd = svd_wide(&a).unwrap();
        assert!((svd.s[0] - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(svd.s[1], 0.0);
        let vtv = svd.v.transpose().matmul(&svd.v).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(3)) < 1e-12);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        let back = a.matvec(&x);
        assert!(dist(&back, &[1.0, 2.0, 3.0]) < 1e-12);
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&bad), Err(LinalgError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
