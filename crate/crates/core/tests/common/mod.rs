#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statlin::field::{PolyMatrixMap, PolyVectorField};
use statlin::poly::Polynomial;
use statlin::rational::{from_i64, random_rational, ratio};
use statlin::{ControlAffineSystem, QMatrix, Rational};

/// Exponent vectors of total degree `<= degree` in `n` variables.
pub fn monomials_upto(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, degree, &mut Vec::new(), &mut out);
    out
}

/// Each monomial present with probability `density`, coefficient `k / denom`.
pub fn random_poly(
    rng: &mut ChaCha8Rng,
    n: usize,
    degree: u32,
    density: f64,
    bound: i64,
    denom: i64,
) -> Polynomial {
    let mut terms: Vec<(Vec<u32>, Rational)> = Vec::new();
    for e in monomials_upto(n, degree) {
        if rng.random_bool(density) {
            terms.push((e, random_rational(rng, bound, denom)));
        }
    }
    Polynomial::from_terms(n, terms).unwrap()
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize, degree: u32) -> PolyVectorField {
    PolyVectorField::new((0..n).map(|_| random_poly(rng, n, degree, 0.7, 6, 4)).collect()).unwrap()
}

pub fn random_qmatrix(rng: &mut ChaCha8Rng, r: usize, c: usize, bound: i64, denom: i64) -> QMatrix {
    QMatrix::from_fn(r, c, |_, _| random_rational(rng, bound, denom))
}

/// Polynomial diffusion of degree `<= degree`, `n x d`.
pub fn random_diffusion(rng: &mut ChaCha8Rng, n: usize, d: usize, degree: u32) -> PolyMatrixMap {
    let entries = (0..n * d).map(|_| random_poly(rng, n, degree, 0.6, 4, 4)).collect();
    PolyMatrixMap::new(n, d, n, entries).unwrap()
}

pub fn random_system(
    rng: &mut ChaCha8Rng,
    n: usize,
    m_u: usize,
    degree: u32,
    noise_degree: Option<u32>,
) -> ControlAffineSystem {
    let f0 = random_field(rng, n, degree);
    let controls = (0..m_u).map(|_| random_field(rng, n, degree)).collect();
    let g = match noise_degree {
        Some(k) => random_diffusion(rng, n, n, k),
        None => PolyMatrixMap::zeros(n, 1, n),
    };
    ControlAffineSystem::new(f0, controls, g).unwrap()
}

/// Random biaffine system: linear fields `A_i x`, constant `n x d` noise.
pub fn random_biaffine(
    rng: &mut ChaCha8Rng,
    n: usize,
    m_u: usize,
    d: usize,
) -> statlin::biaffine::BiaffineSystem {
    let mats = (0..=m_u).map(|_| random_qmatrix(rng, n, n, 8, 4)).collect();
    let g = random_qmatrix(rng, n, d, 4, 2);
    statlin::biaffine::BiaffineSystem::new(mats, g).unwrap()
}

/// Nonzero random point with entries `k / 8`.
pub fn random_nonzero_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    loop {
        let m: Vec<Rational> = (0..n).map(|_| random_rational(rng, 24, 8)).collect();
        if m.iter().any(|x| *x != from_i64(0)) {
            return m;
        }
    }
}

pub fn half() -> Rational {
    ratio(1, 2)
}

/// Vectorization used across the crate: `v` then the upper triangle of `Q`
/// row by row, written out independently of the library helper.
pub fn pack(v: &[f64], q: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = v.len();
    let mut out = v.to_vec();
    for i in 0..n {
        for j in i..n {
            out.push(q[(i, j)]);
        }
    }
    out
}

pub fn unpack(n: usize, x: &[f64]) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let mut q = nalgebra::DMatrix::zeros(n, n);
    let mut k = n;
    for i in 0..n {
        for j in i..n {
            q[(i, j)] = x[k];
            q[(j, i)] = x[k];
            k += 1;
        }
    }
    (x[..n].to_vec(), q)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
