//! Dense exact matrices, incremental exact rank, and floating-point rank
//! by singular-value thresholding.

use nalgebra::{DMatrix, DVector};
use num::{One, Signed, Zero};

use crate::error::{dim_err, Error, Result};
use crate::rational::{to_f64, Rational};

/// Row-major dense matrix over the rationals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl QMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMatrix {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rational::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(dim_err("ragged matrix rows"));
        }
        Ok(QMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Rational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        QMatrix { rows, cols, data }
    }

    /// Matrix unit `E_ij`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = Rational::one();
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<Rational>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn mul(&self, rhs: &QMatrix) -> Result<QMatrix> {
        if self.cols != rhs.rows {
            return Err(dim_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self::from_fn(self.rows, rhs.cols, |i, j| {
            let mut acc = Rational::zero();
            for k in 0..self.cols {
                if !self[(i, k)].is_zero() {
                    acc += &self[(i, k)] * &rhs[(k, j)];
                }
            }
            acc
        }))
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Result<Vec<Rational>> {
        if v.len() != self.cols {
            return Err(dim_err("matrix-vector length mismatch"));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Rational::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect())
    }

    pub fn add(&self, rhs: &QMatrix) -> Result<QMatrix> {
        self.same_shape(rhs)?;
        Ok(QMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, rhs: &QMatrix) -> Result<QMatrix> {
        self.same_shape(rhs)?;
        Ok(QMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, c: &Rational) -> QMatrix {
        QMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    /// `AB - BA`.
    pub fn commutator(&self, rhs: &QMatrix) -> Result<QMatrix> {
        self.mul(rhs)?.sub(&rhs.mul(self)?)
    }

    fn same_shape(&self, rhs: &QMatrix) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(dim_err(format!(
                "shape {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }

    /// Exact positive-definiteness test for a symmetric matrix: every pivot
    /// of the symmetric Gaussian elimination must be strictly positive.
    pub fn is_positive_definite(&self) -> bool {
        if !self.is_symmetric() {
            return false;
        }
        let n = self.rows;
        let mut a = self.clone();
        for k in 0..n {
            let pivot = a[(k, k)].clone();
            if !pivot.is_positive() {
                return false;
            }
            for i in k + 1..n {
                let factor = &a[(i, k)] / &pivot;
                if factor.is_zero() {
                    continue;
                }
                for j in k..n {
                    let delta = &factor * &a[(k, j)];
                    a[(i, j)] -= delta;
                }
            }
        }
        true
    }

    /// Exact inverse by Gauss-Jordan elimination.
    pub fn inverse(&self) -> Result<QMatrix> {
        if !self.is_square() {
            return Err(dim_err("inverse of a non-square matrix"));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for k in 0..n {
            let p = (k..n)
                .find(|&i| !a[(i, k)].is_zero())
                .ok_or_else(|| Error::Invalid("singular matrix".into()))?;
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                    inv.data.swap(k * n + j, p * n + j);
                }
            }
            let piv = a[(k, k)].clone();
            for j in 0..n {
                a[(k, j)] /= &piv;
                inv[(k, j)] /= &piv;
            }
            for i in 0..n {
                if i == k || a[(i, k)].is_zero() {
                    continue;
                }
                let f = a[(i, k)].clone();
                for j in 0..n {
                    let d1 = &f * &a[(k, j)];
                    a[(i, j)] -= d1;
                    let d2 = &f * &inv[(k, j)];
                    inv[(i, j)] -= d2;
                }
            }
        }
        Ok(inv)
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| to_f64(&self[(i, j)]))
    }
}

impl std::ops::Index<(usize, usize)> for QMatrix {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for QMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.cols + j]
    }
}

/// Reduced row-echelon basis maintained one vector at a time.
///
/// `insert` returns whether the vector raised the rank. Stored rows are
/// normalized so their pivot entry is 1.
#[derive(Clone, Debug, Default)]
pub struct EchelonBasis {
    len: usize,
    rows: Vec<(usize, Vec<Rational>)>,
}

impl EchelonBasis {
    pub fn new(len: usize) -> Self {
        EchelonBasis {
            len,
            rows: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.len
    }

    fn reduce(&self, v: &[Rational]) -> Vec<Rational> {
        let mut v = v.to_vec();
        for (pivot, row) in &self.rows {
            if v[*pivot].is_zero() {
                continue;
            }
            let f = v[*pivot].clone();
            for (x, r) in v.iter_mut().zip(row).skip(*pivot) {
                if !r.is_zero() {
                    *x -= &f * r;
                }
            }
        }
        v
    }

    pub fn contains(&self, v: &[Rational]) -> bool {
        self.reduce(v).iter().all(Zero::is_zero)
    }

    pub fn insert(&mut self, v: &[Rational]) -> bool {
        assert_eq!(v.len(), self.len, "echelon vector length");
        let mut r = self.reduce(v);
        let Some(pivot) = r.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = Rational::one() / &r[pivot];
        for x in r.iter_mut().skip(pivot) {
            *x *= &inv;
        }
        // keep earlier rows reduced against the new pivot
        for (_, row) in self.rows.iter_mut() {
            if row[pivot].is_zero() {
                continue;
            }
            let f = row[pivot].clone();
            for (x, y) in row.iter_mut().zip(&r).skip(pivot) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        }
        let at = self.rows.partition_point(|(p, _)| *p < pivot);
        self.rows.insert(at, (pivot, r));
        true
    }
}

/// Exact rank of a family of rational vectors. An empty family has rank 0.
pub fn exact_rank(vectors: &[Vec<Rational>]) -> Result<usize> {
    let Some(first) = vectors.first() else {
        return Ok(0);
    };
    let len = first.len();
    if vectors.iter().any(|v| v.len() != len) {
        return Err(dim_err("vectors of different lengths"));
    }
    let mut basis = EchelonBasis::new(len);
    for v in vectors {
        basis.insert(v);
        if basis.rank() == len {
            break;
        }
    }
    Ok(basis.rank())
}

/// Singular values (descending) of the matrix whose columns are `vectors`.
pub fn singular_values(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = vectors.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if vectors.iter().any(|v| v.len() != len) {
        return Err(dim_err("vectors of different lengths"));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    let m = DMatrix::from_fn(len, vectors.len(), |i, j| vectors[j][i]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(vectors: &[Vec<f64>], tol: f64) -> Result<usize> {
    Ok(rank_from_singular_values(&singular_values(vectors)?, tol))
}

pub fn rank_from_singular_values(s: &[f64], tol: f64) -> usize {
    let Some(&smax) = s.first() else {
        return 0;
    };
    if smax.is_nan() || smax <= 0.0 || smax.is_infinite() {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(p: &DMatrix<f64>) -> f64 {
    if p.nrows() == 0 {
        return f64::INFINITY;
    }
    p.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn to_f64_vec(v: &[Rational]) -> Vec<f64> {
    v.iter().map(to_f64).collect()
}

pub fn dvector(v: &[Rational]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(to_f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{from_i64, ratio};

    fn q(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| from_i64(x)).collect()
    }

    #[test]
    fn exact_rank_basic() {
        assert_eq!(exact_rank(&[q(&[1, 0]), q(&[0, 1]), q(&[1, 1])]).unwrap(), 2);
        assert_eq!(exact_rank(&[]).unwrap(), 0);
        assert_eq!(exact_rank(&[q(&[0, 0, 0])]).unwrap(), 0);
        assert!(exact_rank(&[q(&[1]), q(&[1, 2])]).is_err());
    }

    #[test]
    fn numerical_rank_thresholds_tiny_vectors() {
        let v = vec![1.0, 2.0, 3.0];
        let w = vec![1e-14, -2e-14, 5e-14];
        assert_eq!(numerical_rank(&[v.clone(), w.clone()], 1e-8).unwrap(), 1);
        assert_eq!(numerical_rank(&[v, w], 1e-16).unwrap(), 2);
        assert_eq!(numerical_rank(&[], 1e-8).unwrap(), 0);
        assert_eq!(
            numerical_rank(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], 1e-8).unwrap(),
            2
        );
    }

    #[test]
    fn echelon_contains_and_insert() {
        let mut b = EchelonBasis::new(3);
        assert!(b.insert(&q(&[0, 2, 4])));
        assert!(b.insert(&q(&[1, 1, 0])));
        assert!(!b.insert(&q(&[2, 4, 4])));
        assert!(b.contains(&q(&[1, 3, 4])));
        assert!(!b.contains(&q(&[0, 0, 1])));
        assert_eq!(b.rank(), 2);
    }

    #[test]
    fn exact_positive_definite() {
        let p = QMatrix::from_rows(vec![q(&[2, 1]), q(&[1, 2])]).unwrap();
        assert!(p.is_positive_definite());
        let s = QMatrix::from_rows(vec![q(&[1, 2]), q(&[2, 1])]).unwrap();
        assert!(!s.is_positive_definite());
        let ns = QMatrix::from_rows(vec![q(&[2, 1]), q(&[0, 2])]).unwrap();
        assert!(!ns.is_positive_definite());
        assert!(!QMatrix::zeros(2, 2).is_positive_definite());
    }

    #[test]
    fn inverse_is_exact() {
        let p = QMatrix::from_rows(vec![q(&[2, 1]), q(&[1, 3])]).unwrap();
        let inv = p.inverse().unwrap();
        assert_eq!(p.mul(&inv).unwrap(), QMatrix::identity(2));
        assert_eq!(inv[(0, 1)], ratio(-1, 5));
        assert!(QMatrix::zeros(2, 2).inverse().is_err());
    }

    #[test]
    fn commutator_of_units() {
        let e12 = QMatrix::unit(2, 0, 1);
        let e21 = QMatrix::unit(2, 1, 0);
        let h = e12.commutator(&e21).unwrap();
        assert_eq!(h[(0, 0)], from_i64(1));
        assert_eq!(h[(1, 1)], from_i64(-1));
    }
}
