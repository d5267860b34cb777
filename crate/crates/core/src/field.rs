//! Polynomial vector fields on R^n and their flat Lie calculus.
//!
//! Bracket convention: `[f1, f2] = Df2 . f1 - Df1 . f2`.

use nalgebra::DMatrix;
use num::Zero;

use crate::error::{dim_err, Result};
use crate::linalg::QMatrix;
use crate::poly::Polynomial;
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyVectorField {
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let n = components.len();
        if let Some(bad) = components.iter().find(|p| p.num_vars() != n) {
            return Err(dim_err(format!(
                "field of dimension {n} has a component in {} variables",
                bad.num_vars()
            )));
        }
        Ok(PolyVectorField { components })
    }

    pub fn zero(n: usize) -> Self {
        PolyVectorField {
            components: vec![Polynomial::zero(n); n],
        }
    }

    /// `x -> A x`.
    pub fn linear(a: &QMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(dim_err("linear field needs a square matrix"));
        }
        let n = a.nrows();
        let components = (0..n)
            .map(|i| {
                (0..n).fold(Polynomial::zero(n), |acc, j| {
                    &acc + &Polynomial::var(n, j).scale(&a[(i, j)])
                })
            })
            .collect();
        Ok(PolyVectorField { components })
    }

    pub fn constant(v: &[Rational]) -> Self {
        let n = v.len();
        PolyVectorField {
            components: v.iter().map(|c| Polynomial::constant(n, c.clone())).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// True when every component is a homogeneous linear form.
    pub fn is_linear(&self) -> bool {
        self.components
            .iter()
            .all(|p| p.terms().all(|(m, _)| m.degree() == 1))
    }

    /// The matrix `A` with `f(x) = A x`, when the field is linear.
    pub fn linear_part(&self) -> Option<QMatrix> {
        if !self.is_linear() {
            return None;
        }
        let n = self.dim();
        Some(QMatrix::from_fn(n, n, |i, j| {
            let mut e = vec![0; n];
            e[j] = 1;
            self.components[i].coefficient(&e)
        }))
    }

    pub fn eval(&self, m: &[Rational]) -> Result<Vec<Rational>> {
        self.check_point(m.len())?;
        self.components.iter().map(|p| p.eval(m)).collect()
    }

    pub fn eval_f64(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.check_point(m.len())?;
        Ok(self.components.iter().map(|p| p.eval_f64(m)).collect())
    }

    fn check_point(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(dim_err(format!(
                "point of length {len} for a field of dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn jacobian(&self) -> PolyMatrixMap {
        let n = self.dim();
        let entries = self
            .components
            .iter()
            .flat_map(|p| (0..n).map(move |j| p.derivative(j)))
            .collect();
        PolyMatrixMap {
            rows: n,
            cols: n,
            num_vars: n,
            entries,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, c: &Rational) -> Self {
        PolyVectorField {
            components: self.components.iter().map(|p| p.scale(c)).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        PolyVectorField {
            components: self.components.iter().map(|p| -p).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&Polynomial, &Polynomial) -> Polynomial) -> Self {
        PolyVectorField {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(dim_err(format!(
                "fields of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Directional derivative `sum_j (dp/dx_j) v_j` of a scalar polynomial.
pub fn derivative_along(p: &Polynomial, v: &PolyVectorField) -> Polynomial {
    v.components()
        .iter()
        .enumerate()
        .filter(|(_, vj)| !vj.is_zero())
        .fold(Polynomial::zero(p.num_vars()), |acc, (j, vj)| {
            let dp = p.derivative(j);
            if dp.is_zero() {
                acc
            } else {
                &acc + &(&dp * vj)
            }
        })
}

/// Flat bracket `[f1, f2] = Df2 . f1 - Df1 . f2`.
pub fn lie_bracket(f1: &PolyVectorField, f2: &PolyVectorField) -> Result<PolyVectorField> {
    f1.check_same(f2)?;
    let components = f1
        .components()
        .iter()
        .zip(f2.components())
        .map(|(c1, c2)| &derivative_along(c2, f1) - &derivative_along(c1, f2))
        .collect();
    Ok(PolyVectorField { components })
}

/// `ad^s f0 . f1`: `s = 0` returns `f1`, otherwise `[f0, ad^{s-1} f0 . f1]`.
pub fn ad_iter(f0: &PolyVectorField, f1: &PolyVectorField, s: usize) -> Result<PolyVectorField> {
    let mut out = f1.clone();
    for _ in 0..s {
        out = lie_bracket(f0, &out)?;
    }
    Ok(out)
}

/// Matrix of polynomials, e.g. a diffusion `g : R^n -> R^{n x d}` or a Jacobian.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMatrixMap {
    rows: usize,
    cols: usize,
    num_vars: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrixMap {
    /// Row-major entries.
    pub fn new(rows: usize, cols: usize, num_vars: usize, entries: Vec<Polynomial>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(dim_err(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|p| p.num_vars() != num_vars) {
            return Err(dim_err("matrix entries over different variable counts"));
        }
        Ok(PolyMatrixMap {
            rows,
            cols,
            num_vars,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize, num_vars: usize) -> Self {
        PolyMatrixMap {
            rows,
            cols,
            num_vars,
            entries: vec![Polynomial::zero(num_vars); rows * cols],
        }
    }

    pub fn constant(m: &QMatrix, num_vars: usize) -> Self {
        PolyMatrixMap {
            rows: m.nrows(),
            cols: m.ncols(),
            num_vars,
            entries: m
                .as_slice()
                .iter()
                .map(|c| Polynomial::constant(num_vars, c.clone()))
                .collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }

    /// True when no entry depends on the state.
    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|p| p.degree() == 0)
    }

    pub fn transpose(&self) -> Self {
        let entries = (0..self.cols)
            .flat_map(|j| (0..self.rows).map(move |i| (i, j)))
            .map(|(i, j)| self.get(i, j).clone())
            .collect();
        PolyMatrixMap {
            rows: self.cols,
            cols: self.rows,
            num_vars: self.num_vars,
            entries,
        }
    }

    pub fn mul(&self, rhs: &PolyMatrixMap) -> Result<PolyMatrixMap> {
        if self.cols != rhs.rows || self.num_vars != rhs.num_vars {
            return Err(dim_err("polynomial matrix product shape mismatch"));
        }
        let mut entries = Vec::with_capacity(self.rows * rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = Polynomial::zero(self.num_vars);
                for k in 0..self.cols {
                    let a = self.get(i, k);
                    let b = rhs.get(k, j);
                    if !a.is_zero() && !b.is_zero() {
                        acc = &acc + &(a * b);
                    }
                }
                entries.push(acc);
            }
        }
        Ok(PolyMatrixMap {
            rows: self.rows,
            cols: rhs.cols,
            num_vars: self.num_vars,
            entries,
        })
    }

    pub fn eval(&self, m: &[Rational]) -> Result<QMatrix> {
        if m.len() != self.num_vars {
            return Err(dim_err("point length vs matrix map variables"));
        }
        let vals: Vec<Rational> = self.entries.iter().map(|p| p.eval(m)).collect::<Result<_>>()?;
        Ok(QMatrix::from_fn(self.rows, self.cols, |i, j| {
            vals[i * self.cols + j].clone()
        }))
    }

    pub fn eval_f64(&self, m: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval_f64(m))
    }

    /// Constant value, if the map does not depend on the state.
    pub fn constant_value(&self) -> Option<QMatrix> {
        if !self.is_constant() {
            return None;
        }
        let zero = vec![Rational::zero(); self.num_vars];
        self.eval(&zero).ok()
    }
}
