//! Vector fields on mean/covariance space `R^n x Sym+(n)`.
//!
//! Every field handled here has the canonical form
//! `F(m, P) = (f(m), Df(m) P + P Df(m)^T + B(m))` and is stored as the pair
//! `(f, B)`; `B` keeps only its upper triangle so symmetry cannot be broken.
//!
//! Vectorization order for `(v, Q)`: `v` first, then the upper triangle of
//! `Q` row by row (`Q11, Q12, .., Q1n, Q22, .., Qnn`), off-diagonals unscaled.

use nalgebra::{DMatrix, DVector};
use num::Zero;

use crate::error::{dim_err, Error, Result};
use crate::field::{derivative_along, lie_bracket, PolyMatrixMap, PolyVectorField};
use crate::linalg::QMatrix;
use crate::poly::Polynomial;
use crate::rational::Rational;

/// `n + n(n+1)/2`, the dimension of `R^n x Sym(n)`.
pub fn lifted_dim(n: usize) -> usize {
    n + n * (n + 1) / 2
}

/// Upper-triangle index pairs in vectorization order.
pub fn upper_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i..n).map(move |j| (i, j)))
}

/// Symmetric polynomial matrix map `M -> Sym(n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymPolyMatrix {
    n: usize,
    upper: Vec<Polynomial>,
}

impl SymPolyMatrix {
    pub fn zero(n: usize) -> Self {
        SymPolyMatrix {
            n,
            upper: vec![Polynomial::zero(n); n * (n + 1) / 2],
        }
    }

    /// Entries in vectorization order (row-major upper triangle).
    pub fn from_upper(n: usize, upper: Vec<Polynomial>) -> Result<Self> {
        if upper.len() != n * (n + 1) / 2 || upper.iter().any(|p| p.num_vars() != n) {
            return Err(dim_err("upper triangle length or variable count"));
        }
        Ok(SymPolyMatrix { n, upper })
    }

    /// Symmetric part of a square polynomial matrix; fails unless the input
    /// is already symmetric.
    pub fn from_symmetric(m: &PolyMatrixMap) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || m.num_vars() != n {
            return Err(dim_err("symmetric map must be n x n over n variables"));
        }
        for i in 0..n {
            for j in i + 1..n {
                if m.get(i, j) != m.get(j, i) {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(SymPolyMatrix {
            n,
            upper: upper_pairs(n).map(|(i, j)| m.get(i, j).clone()).collect(),
        })
    }

    /// `X + X^T` for an arbitrary square polynomial matrix `X`.
    pub fn sym_sum(x: &PolyMatrixMap) -> Self {
        let n = x.nrows();
        SymPolyMatrix {
            n,
            upper: upper_pairs(n).map(|(i, j)| x.get(i, j) + x.get(j, i)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.upper[pos(self.n, i, j)]
    }

    pub fn upper(&self) -> &[Polynomial] {
        &self.upper
    }

    pub fn is_zero(&self) -> bool {
        self.upper.iter().all(Polynomial::is_zero)
    }

    pub fn to_full(&self) -> PolyMatrixMap {
        let n = self.n;
        let entries = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j).clone())
            .collect();
        PolyMatrixMap::new(n, n, n, entries).expect("square by construction")
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    fn zip(&self, o: &Self, f: impl Fn(&Polynomial, &Polynomial) -> Polynomial) -> Self {
        assert_eq!(self.n, o.n);
        SymPolyMatrix {
            n: self.n,
            upper: self.upper.iter().zip(&o.upper).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, c: &Rational) -> Self {
        SymPolyMatrix {
            n: self.n,
            upper: self.upper.iter().map(|p| p.scale(c)).collect(),
        }
    }

    /// Entrywise directional derivative `dB . v`.
    pub fn derivative_along(&self, v: &PolyVectorField) -> Self {
        SymPolyMatrix {
            n: self.n,
            upper: self.upper.iter().map(|p| derivative_along(p, v)).collect(),
        }
    }

    pub fn eval(&self, m: &[Rational]) -> Result<QMatrix> {
        let vals: Vec<Rational> = self.upper.iter().map(|p| p.eval(m)).collect::<Result<_>>()?;
        let n = self.n;
        Ok(QMatrix::from_fn(n, n, |i, j| vals[pos(n, i, j)].clone()))
    }

    pub fn eval_f64(&self, m: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let vals: Vec<f64> = self.upper.iter().map(|p| p.eval_f64(m)).collect();
        DMatrix::from_fn(n, n, |i, j| vals[pos(n, i, j)])
    }
}

fn pos(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows 0..i hold n + (n-1) + ... + (n-i+1) entries
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// A point `(m, P)` of mean/covariance space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatePoint {
    pub m: Vec<Rational>,
    pub p: QMatrix,
}

impl StatePoint {
    pub fn new(m: Vec<Rational>, p: QMatrix) -> Result<Self> {
        if !p.is_square() || p.nrows() != m.len() {
            return Err(dim_err("covariance shape does not match the mean"));
        }
        if !p.is_symmetric() {
            return Err(Error::NotSymmetric);
        }
        Ok(StatePoint { m, p })
    }

    /// `(m, I)`.
    pub fn at_identity(m: Vec<Rational>) -> Self {
        let n = m.len();
        StatePoint {
            m,
            p: QMatrix::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.p.is_positive_definite()
    }

    pub fn require_pd(&self) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite)
        }
    }
}

/// Tangent vector `(v, Q)` with `Q` symmetric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TangentValue {
    pub v: Vec<Rational>,
    pub q: QMatrix,
}

impl TangentValue {
    pub fn new(v: Vec<Rational>, q: QMatrix) -> Result<Self> {
        if !q.is_square() || q.nrows() != v.len() {
            return Err(dim_err("tangent blocks have inconsistent sizes"));
        }
        if !q.is_symmetric() {
            return Err(Error::NotSymmetric);
        }
        Ok(TangentValue { v, q })
    }

    pub fn zero(n: usize) -> Self {
        TangentValue {
            v: vec![Rational::zero(); n],
            q: QMatrix::zeros(n, n),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(Zero::is_zero) && self.q.is_zero()
    }
}

pub fn vectorize(t: &TangentValue) -> Vec<Rational> {
    let n = t.v.len();
    let mut out = t.v.clone();
    out.extend(upper_pairs(n).map(|(i, j)| t.q[(i, j)].clone()));
    out
}

/// Inverse of [`vectorize`].
pub fn unvectorize(n: usize, x: &[Rational]) -> Result<TangentValue> {
    if x.len() != lifted_dim(n) {
        return Err(dim_err(format!("vector of length {} for n = {n}", x.len())));
    }
    let v = x[..n].to_vec();
    let mut q = QMatrix::zeros(n, n);
    for (k, (i, j)) in upper_pairs(n).enumerate() {
        q[(i, j)] = x[n + k].clone();
        q[(j, i)] = x[n + k].clone();
    }
    Ok(TangentValue { v, q })
}

pub fn vectorize_f64(v: &DVector<f64>, q: &DMatrix<f64>) -> Vec<f64> {
    let n = v.len();
    let mut out: Vec<f64> = v.iter().copied().collect();
    out.extend(upper_pairs(n).map(|(i, j)| q[(i, j)]));
    out
}

/// `(X, Y) -> X Y + Y^T X^T`-style helper: `A P + P A^T`.
fn sandwich_sum(a: &QMatrix, p: &QMatrix) -> Result<QMatrix> {
    let ap = a.mul(p)?;
    ap.add(&ap.transpose())
}

/// `phi_P(v, A) = (v, A P + P A^T)`, defined for positive definite `P`.
pub fn phi_p(v: &[Rational], a: &QMatrix, p: &QMatrix) -> Result<TangentValue> {
    if !p.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    if a.nrows() != p.nrows() || a.ncols() != p.ncols() || v.len() != p.nrows() {
        return Err(dim_err("phi_P operand shapes"));
    }
    Ok(TangentValue {
        v: v.to_vec(),
        q: sandwich_sum(a, p)?,
    })
}

/// Floating-point `phi_P`; `P` must be symmetric positive definite.
pub fn phi_p_f64(
    v: &DVector<f64>,
    a: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if p.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let ap = a * p;
    Ok((v.clone(), &ap + ap.transpose()))
}

/// Field on `R^n x Sym+(n)` in the canonical `(f, B)` form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftedField {
    pub f: PolyVectorField,
    pub b: SymPolyMatrix,
}

impl LiftedField {
    pub fn new(f: PolyVectorField, b: SymPolyMatrix) -> Result<Self> {
        if f.dim() != b.n() {
            return Err(dim_err("f and B dimensions differ"));
        }
        Ok(LiftedField { f, b })
    }

    pub fn n(&self) -> usize {
        self.f.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero() && self.b.is_zero()
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        Ok(LiftedField {
            f: self.f.sub(&o.f)?,
            b: self.b.sub(&o.b),
        })
    }

    /// Floating-point evaluation, mainly for oracles and simulation.
    pub fn eval_f64(&self, m: &[f64], p: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let v = DVector::from_vec(self.f.eval_f64(m).expect("point length"));
        let df = self.f.jacobian().eval_f64(m);
        let dfp = &df * p;
        let q = &dfp + dfp.transpose() + self.b.eval_f64(m);
        (v, q)
    }
}

/// `(f0, g g^T)`: the drift of the statistical linearization.
pub fn lift_drift(f0: &PolyVectorField, g: &PolyMatrixMap) -> Result<LiftedField> {
    let n = f0.dim();
    if g.nrows() != n || g.num_vars() != n {
        return Err(dim_err(format!(
            "diffusion has {} rows over {} variables, drift dimension {n}",
            g.nrows(),
            g.num_vars()
        )));
    }
    let ggt = g.mul(&g.transpose())?;
    Ok(LiftedField {
        f: f0.clone(),
        b: SymPolyMatrix::from_symmetric(&ggt)?,
    })
}

/// `(f_i, 0)`: a control field of the statistical linearization.
pub fn lift_control(fi: &PolyVectorField) -> LiftedField {
    LiftedField {
        f: fi.clone(),
        b: SymPolyMatrix::zero(fi.dim()),
    }
}

/// Bracket of lifted fields with the same convention as the flat bracket.
///
/// The `f`-part is `[f1, f2]`, and the `B`-part is
/// `dB2.f1 - dB1.f2 + Df2 B1 - Df1 B2 + B1 Df2^T - B2 Df1^T`.
pub fn lifted_bracket(a: &LiftedField, b: &LiftedField) -> Result<LiftedField> {
    if a.n() != b.n() {
        return Err(dim_err("lifted fields of different dimensions"));
    }
    let f = lie_bracket(&a.f, &b.f)?;
    let mut bb = b.b.derivative_along(&a.f).sub(&a.b.derivative_along(&b.f));
    // Df2 B1 + B1 Df2^T - (Df1 B2 + B2 Df1^T) = sym(Df2 B1 - Df1 B2)
    let needs_cross = !a.b.is_zero() || !b.b.is_zero();
    if needs_cross {
        let mut x = PolyMatrixMap::zeros(a.n(), a.n(), a.n());
        if !a.b.is_zero() {
            x = add_maps(&x, &b.f.jacobian().mul(&a.b.to_full())?);
        }
        if !b.b.is_zero() {
            x = sub_maps(&x, &a.f.jacobian().mul(&b.b.to_full())?);
        }
        bb = bb.add(&SymPolyMatrix::sym_sum(&x));
    }
    Ok(LiftedField { f, b: bb })
}

fn add_maps(x: &PolyMatrixMap, y: &PolyMatrixMap) -> PolyMatrixMap {
    let entries = x.entries().iter().zip(y.entries()).map(|(a, b)| a + b).collect();
    PolyMatrixMap::new(x.nrows(), x.ncols(), x.num_vars(), entries).expect("same shape")
}

fn sub_maps(x: &PolyMatrixMap, y: &PolyMatrixMap) -> PolyMatrixMap {
    let entries = x.entries().iter().zip(y.entries()).map(|(a, b)| a - b).collect();
    PolyMatrixMap::new(x.nrows(), x.ncols(), x.num_vars(), entries).expect("same shape")
}

/// Exact value `(f(m), Df(m) P + P Df(m)^T + B(m))`.
pub fn eval_lifted(field: &LiftedField, x: &StatePoint) -> Result<TangentValue> {
    if x.n() != field.n() {
        return Err(dim_err("state dimension differs from field dimension"));
    }
    if !x.p.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    let v = field.f.eval(&x.m)?;
    let df = field.f.jacobian().eval(&x.m)?;
    let q = sandwich_sum(&df, &x.p)?.add(&field.b.eval(&x.m)?)?;
    Ok(TangentValue { v, q })
}

/// Vectorized tangent at `(m, I)` without forming `P`:
/// `(f(m), Df(m) + Df(m)^T)`.
pub fn flat_tangent(f: &PolyVectorField, m: &[Rational]) -> Result<Vec<Rational>> {
    let n = f.dim();
    let mut out = f.eval(m)?;
    let df = f.jacobian().eval(m)?;
    out.extend(upper_pairs(n).map(|(i, j)| &df[(i, j)] + &df[(j, i)]));
    Ok(out)
}
