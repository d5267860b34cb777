//! Biaffine systems: `f_i(x) = A_i x` with constant diffusion `g`.
//!
//! Brackets of the lifted fields `F_i` close on affine fields in `(m, P)`,
//! so everything here reduces to finite-dimensional matrix algebra.

use nalgebra::{DMatrix, DVector};
use num::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::field::{PolyMatrixMap, PolyVectorField};
use crate::linalg::{EchelonBasis, QMatrix};
use crate::lift::{lifted_dim, vectorize, LiftedField, StatePoint, SymPolyMatrix, TangentValue};
use crate::poly::Polynomial;
use crate::rank::{
    check_rank_at_state, fmt_matrix, random_pd, random_point, BracketMode, CheckOptions, Verdict,
};
use crate::rational::{format_rational, ratio, to_f64, Rational};
use crate::system::ControlAffineSystem;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiaffineSystem {
    /// `A_0, A_1, .., A_mu`.
    matrices: Vec<QMatrix>,
    g: QMatrix,
}

impl BiaffineSystem {
    pub fn new(matrices: Vec<QMatrix>, g: QMatrix) -> Result<Self> {
        let Some(a0) = matrices.first() else {
            return Err(dim_err("a biaffine system needs at least the drift matrix A0"));
        };
        let n = a0.nrows();
        if n == 0 || matrices.iter().any(|a| a.nrows() != n || a.ncols() != n) {
            return Err(dim_err("all A_i must be n x n"));
        }
        if g.nrows() != n {
            return Err(dim_err("g must have n rows"));
        }
        Ok(BiaffineSystem { matrices, g })
    }

    /// Reads off matrices from a system with linear drift fields and
    /// constant diffusion.
    pub fn from_system(sys: &ControlAffineSystem) -> Result<Self> {
        let n = sys.n();
        let mut matrices = Vec::new();
        for f in sys.fields() {
            let a = if f.is_zero() {
                QMatrix::zeros(n, n)
            } else {
                f.linear_part()
                    .ok_or_else(|| Error::Invalid("drift field is not linear".into()))?
            };
            matrices.push(a);
        }
        let g = sys
            .diffusion()
            .constant_value()
            .ok_or_else(|| Error::Invalid("diffusion is not constant".into()))?;
        Self::new(matrices, g)
    }

    pub fn to_system(&self) -> ControlAffineSystem {
        let n = self.n();
        let fields: Vec<PolyVectorField> = self
            .matrices
            .iter()
            .map(|a| PolyVectorField::linear(a).expect("square"))
            .collect();
        let mut it = fields.into_iter();
        let drift = it.next().expect("A0 present");
        ControlAffineSystem::new(drift, it.collect(), PolyMatrixMap::constant(&self.g, n))
            .expect("consistent by construction")
    }

    pub fn n(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn num_controls(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn matrices(&self) -> &[QMatrix] {
        &self.matrices
    }

    pub fn g(&self) -> &QMatrix {
        &self.g
    }

    pub fn ggt(&self) -> QMatrix {
        self.g.mul(&self.g.transpose()).expect("n x d times d x n")
    }

    /// Closed-form lifted bracket `[F_i, F_j]`.
    ///
    /// With `[F1, F2] = dF2.F1 - dF1.F2` the mean part is `[A_j, A_i] m` and
    /// the covariance part is `[A_j, A_i] P + P [A_j, A_i]^T + B_ij`, where
    /// `B_0j = A_j g g^T + g g^T A_j^T = -B_j0` and `B_ij = 0` otherwise.
    pub fn bracket(&self, i: usize, j: usize) -> Result<LiftedField> {
        let k = self.matrices.len();
        if i >= k || j >= k {
            return Err(Error::Invalid(format!("field index out of range ({i}, {j})")));
        }
        let n = self.n();
        let c = self.matrices[j].commutator(&self.matrices[i])?;
        let b = match (i, j) {
            (0, 0) => QMatrix::zeros(n, n),
            (0, j) => b0j(&self.matrices[j], &self.g)?,
            (i, 0) => b0j(&self.matrices[i], &self.g)?.scale(&Rational::from_integer((-1).into())),
            _ => QMatrix::zeros(n, n),
        };
        LiftedField::new(PolyVectorField::linear(&c)?, constant_sym(&b))
    }
}

fn constant_sym(b: &QMatrix) -> SymPolyMatrix {
    let n = b.nrows();
    let upper = crate::lift::upper_pairs(n)
        .map(|(i, j)| Polynomial::constant(n, b[(i, j)].clone()))
        .collect();
    SymPolyMatrix::from_upper(n, upper).expect("n x n")
}

fn vec_matrix(a: &QMatrix) -> Vec<Rational> {
    a.as_slice().to_vec()
}

/// Dimension and a basis of the matrix Lie algebra generated by `gens`
/// under `[A, B] = AB - BA`.
pub fn matrix_lie_dim(gens: &[QMatrix]) -> Result<(usize, Vec<QMatrix>)> {
    let Some(first) = gens.first() else {
        return Err(Error::Invalid("need at least one generator".into()));
    };
    let n = first.nrows();
    if gens.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return Err(dim_err("generators must be n x n"));
    }
    let mut echelon = EchelonBasis::new(n * n);
    let mut basis: Vec<QMatrix> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for a in gens {
        if echelon.insert(&vec_matrix(a)) {
            basis.push(a.clone());
            frontier.push(basis.len() - 1);
        }
    }
    // right-normed brackets [x, e] span the algebra; stop when a level adds nothing
    while !frontier.is_empty() && echelon.rank() < n * n {
        let mut next = Vec::new();
        for &e in &frontier {
            for x in gens {
                let c = x.commutator(&basis[e])?;
                if echelon.insert(&vec_matrix(&c)) {
                    basis.push(c);
                    next.push(basis.len() - 1);
                }
            }
        }
        frontier = next;
    }
    Ok((echelon.rank(), basis))
}

/// `B_0j = A_j g g^T + g g^T A_j^T`.
pub fn b0j(aj: &QMatrix, g: &QMatrix) -> Result<QMatrix> {
    if aj.nrows() != g.nrows() || !aj.is_square() {
        return Err(dim_err("A_j must be n x n and g must have n rows"));
    }
    let x = aj.mul(&g.mul(&g.transpose())?)?;
    x.add(&x.transpose())
}

/// `psi_(m,P)(A) = (A m, A P + P A^T)`.
pub fn psi(a: &QMatrix, m: &[Rational], p: &QMatrix) -> Result<TangentValue> {
    let ap = a.mul(p)?;
    TangentValue::new(a.mul_vec(m)?, ap.add(&ap.transpose())?)
}

/// Rank of `psi_(m,P)` over all of `M_n(R)`.
pub fn psi_rank(m: &[Rational], p: &QMatrix) -> Result<usize> {
    let n = m.len();
    let units: Vec<QMatrix> = (0..n)
        .flat_map(|i| (0..n).map(move |j| QMatrix::unit(n, i, j)))
        .collect();
    psi_rank_on(&units, m, p)
}

/// Rank of `psi_(m,P)` restricted to the span of `matrices`.
pub fn psi_rank_on(matrices: &[QMatrix], m: &[Rational], p: &QMatrix) -> Result<usize> {
    let n = m.len();
    if p.nrows() != n || !p.is_square() {
        return Err(dim_err("P must be n x n"));
    }
    if !p.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    let mut echelon = EchelonBasis::new(lifted_dim(n));
    for a in matrices {
        echelon.insert(&vectorize(&psi(a, m, p)?));
    }
    Ok(echelon.rank())
}

fn require_pd_f64(p: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    p.clone().cholesky().ok_or(Error::NotPositiveDefinite)
}

/// `alpha(v, Q) = m^T P^-1 (v - Q P^-1 m / 2)` evaluated on ` [F_0, F_i](m, P)`.
///
/// A nonzero value certifies that the bracket leaves the span of
/// `Lie(F_1, .., F_mu)` at `(m, P)`.
pub fn alpha_witness(
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    a0: &DMatrix<f64>,
    ai: &DMatrix<f64>,
    g: &DMatrix<f64>,
) -> Result<f64> {
    let n = m.len();
    if p.shape() != (n, n) || a0.shape() != (n, n) || ai.shape() != (n, n) || g.nrows() != n {
        return Err(dim_err("alpha witness operand shapes"));
    }
    let chol = require_pd_f64(p)?;
    let c = ai * a0 - a0 * ai;
    let ggt = g * g.transpose();
    let b = ai * &ggt + &ggt * ai.transpose();
    let v = &c * m;
    let cp = &c * p;
    let q = &cp + cp.transpose() + b;
    let pinv_m = chol.solve(m);
    let inner = v - &q * &pinv_m * 0.5;
    Ok(pinv_m.dot(&inner))
}

/// `-m^T P^-1 B P^-1 m / 2`.
pub fn alpha_closed_form(m: &DVector<f64>, p: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let chol = require_pd_f64(p)?;
    let w = chol.solve(m);
    Ok(-0.5 * w.dot(&(b * &w)))
}

fn alpha_exact(m: &[Rational], p: &QMatrix, b: &QMatrix) -> Result<Rational> {
    let w = p.inverse()?.mul_vec(m)?;
    let bw = b.mul_vec(&w)?;
    let s = w.iter().zip(&bw).fold(Rational::zero(), |acc, (x, y)| acc + x * y);
    Ok(s * ratio(-1, 2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficientConclusion {
    /// Fixed-time accessibility rank condition on an open dense set.
    AccessibleOnOpenDenseSet,
    NoConclusion,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaCertificate {
    pub index: usize,
    pub m: Vec<String>,
    pub p: Vec<Vec<String>>,
    pub alpha: String,
    pub alpha_f64: f64,
    pub attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SufficientReport {
    pub n: usize,
    pub num_controls: usize,
    pub control_lie_dim: usize,
    pub hypothesis_full_algebra: bool,
    /// Indices `i >= 1` with `B_0i != 0`.
    pub nonzero_b0: Vec<usize>,
    pub hypothesis_b0_nonzero: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<AlphaCertificate>,
    pub samples: usize,
    pub passes: usize,
    pub pass_fraction: f64,
    pub conclusion: SufficientConclusion,
}

/// Bounded random search for `(m, P)` with `m^T P^-1 B P^-1 m != 0`.
fn find_certificate(
    sys: &BiaffineSystem,
    index: usize,
    b: &QMatrix,
    rng: &mut ChaCha8Rng,
    retries: usize,
) -> Result<Option<AlphaCertificate>> {
    let n = sys.n();
    for attempt in 1..=retries {
        let m = random_point(rng, n);
        let p = random_pd(rng, n);
        let alpha = alpha_exact(&m, &p, b)?;
        if alpha.is_zero() {
            continue;
        }
        let mf = DVector::from_iterator(n, m.iter().map(to_f64));
        let alpha_f64 = alpha_witness(
            &mf,
            &p.to_f64(),
            &sys.matrices[0].to_f64(),
            &sys.matrices[index].to_f64(),
            &sys.g.to_f64(),
        )?;
        return Ok(Some(AlphaCertificate {
            index,
            m: m.iter().map(format_rational).collect(),
            p: fmt_matrix(&p),
            alpha: format_rational(&alpha),
            alpha_f64,
            attempts: attempt,
        }));
    }
    Ok(None)
}

pub const CERTIFICATE_RETRIES: usize = 50;

/// Tests the two sufficient hypotheses for fixed-time accessibility of a
/// biaffine lifted system and, when they hold, measures how often the rank
/// condition holds at random `(m, P)`.
pub fn check_sufficient(sys: &BiaffineSystem, samples: usize, opts: &CheckOptions) -> Result<SufficientReport> {
    if samples == 0 {
        return Err(Error::Invalid("samples must be at least 1".into()));
    }
    let n = sys.n();
    let controls = &sys.matrices[1..];
    let control_lie_dim = if controls.is_empty() {
        0
    } else {
        matrix_lie_dim(controls)?.0
    };
    let hyp_i = control_lie_dim == n * n;
    let mut nonzero_b0 = Vec::new();
    let mut first_b = None;
    for (i, a) in controls.iter().enumerate() {
        let b = b0j(a, &sys.g)?;
        if !b.is_zero() {
            nonzero_b0.push(i + 1);
            first_b.get_or_insert((i + 1, b));
        }
    }
    let hyp_ii = !nonzero_b0.is_empty();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = SufficientReport {
        n,
        num_controls: sys.num_controls(),
        control_lie_dim,
        hypothesis_full_algebra: hyp_i,
        nonzero_b0,
        hypothesis_b0_nonzero: hyp_ii,
        certificate: None,
        samples,
        passes: 0,
        pass_fraction: 0.0,
        conclusion: SufficientConclusion::NoConclusion,
    };
    if !(hyp_i && hyp_ii) {
        return Ok(report);
    }
    let (index, b) = first_b.expect("hypothesis (ii) holds");
    report.certificate = find_certificate(sys, index, &b, &mut rng, CERTIFICATE_RETRIES)?;
    report.conclusion = SufficientConclusion::AccessibleOnOpenDenseSet;

    let states: Vec<StatePoint> = (0..samples)
        .map(|_| StatePoint { m: random_point(&mut rng, n), p: random_pd(&mut rng, n) })
        .collect();
    let rank_report = check_rank_at_state(&sys.to_system(), &states, opts, BracketMode::ZeroTimeIdeal)?;
    report.passes = rank_report
        .points
        .iter()
        .filter(|p| p.verdict == Verdict::Pass)
        .count();
    report.pass_fraction = report.passes as f64 / samples as f64;
    Ok(report)
}
