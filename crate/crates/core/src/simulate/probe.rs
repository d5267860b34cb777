use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{integrate_statlin, CompiledSystem, ControlSignal, IntegrateOptions};
use crate::error::{Error, Result};
use crate::field::PolyVectorField;
use crate::lift::{lifted_dim, vectorize_f64};
use crate::linalg::{rank_from_singular_values, singular_values};
use crate::poly::Polynomial;
use crate::rank::{check_condition_1, random_point, CheckOptions, Verdict};
use crate::rational::{format_rational, random_rational, Rational};
use crate::system::ControlAffineSystem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOptions {
    /// Random perturbation directions; at least `N`. Defaults to `2N`.
    pub directions: Option<usize>,
    /// Constant pieces a direction is built from. Defaults to `2N`.
    pub pieces: Option<usize>,
    /// Central-difference step.
    pub h: f64,
    /// Relative singular-value threshold.
    pub tol: f64,
    pub seed: u64,
    pub integrate: IntegrateOptions,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            directions: None,
            pieces: None,
            h: 1e-5,
            tol: 1e-6,
            seed: 0,
            integrate: IntegrateOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccessibilityProbe {
    pub target: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub directions: usize,
    pub inconclusive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

fn endpoint(
    sys: &CompiledSystem,
    u: &ControlSignal,
    m0: &[f64],
    p0: &DMatrix<f64>,
    opts: &IntegrateOptions,
) -> Result<std::result::Result<Vec<f64>, String>> {
    let r = integrate_statlin(sys, u, m0, p0, opts)?;
    Ok(match r.diagnostic {
        Some(d) => Err(d),
        None => Ok(vectorize_f64(r.final_mean(), r.final_covariance())),
    })
}

/// Numerical rank of the endpoint map `u -> (m(T), P(T))` around `u`,
/// from central differences along random piecewise-constant directions.
pub fn empirical_accessibility(
    sys: &CompiledSystem,
    u: &ControlSignal,
    m0: &[f64],
    p0: &DMatrix<f64>,
    opts: &ProbeOptions,
) -> Result<AccessibilityProbe> {
    if opts.h.is_nan() || opts.h <= 0.0 {
        return Err(Error::Invalid("difference step must be positive".into()));
    }
    let big_n = lifted_dim(sys.n());
    let directions = opts.directions.unwrap_or(2 * big_n);
    if directions < big_n {
        return Err(Error::Invalid(format!("need at least {big_n} directions")));
    }
    let pieces = opts.pieces.unwrap_or(2 * big_n).clamp(1, u.steps());
    let steps = u.steps();
    let mu = u.num_controls();
    let base = u.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let inconclusive = |d: String| AccessibilityProbe {
        target: big_n,
        rank: 0,
        singular_values: Vec::new(),
        directions,
        inconclusive: true,
        diagnostic: Some(d),
    };
    if let Err(d) = endpoint(sys, u, m0, p0, &opts.integrate)? {
        return Ok(inconclusive(format!("nominal control: {d}")));
    }
    let mut columns = Vec::with_capacity(directions);
    for _ in 0..directions {
        let coarse: Vec<f64> = (0..pieces * mu).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = coarse.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { opts.h / norm } else { 0.0 };
        let delta: Vec<f64> = (0..steps * mu)
            .map(|idx| {
                let (k, c) = (idx / mu.max(1), idx % mu.max(1));
                coarse[(k * pieces / steps) * mu + c] * scale
            })
            .collect();
        let plus: Vec<f64> = base.iter().zip(&delta).map(|(b, d)| b + d).collect();
        let minus: Vec<f64> = base.iter().zip(&delta).map(|(b, d)| b - d).collect();
        let ep = endpoint(sys, &u.from_flat(&plus), m0, p0, &opts.integrate)?;
        let em = endpoint(sys, &u.from_flat(&minus), m0, p0, &opts.integrate)?;
        match (ep, em) {
            (Ok(a), Ok(b)) => {
                columns.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * opts.h)).collect::<Vec<f64>>())
            }
            (Err(d), _) | (_, Err(d)) => return Ok(inconclusive(format!("perturbed control: {d}"))),
        }
    }
    let s = singular_values(&columns)?;
    let rank = if s.first().is_some_and(|&x| x > 0.0) {
        rank_from_singular_values(&s, opts.tol)
    } else {
        0
    };
    Ok(AccessibilityProbe {
        target: big_n,
        rank,
        singular_values: s,
        directions,
        inconclusive: false,
        diagnostic: None,
    })
}

fn monomials(n: usize, degree: u32) -> Vec<Vec<u32>> {
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
    out.retain(|m| m.iter().sum::<u32>() >= 1);
    out
}

/// Adds `eps * c * x^a` with `c` uniform on a 1/1000 grid in `[-1, 1]` for
/// every monomial of degree `1..=degree` in every drift component.
/// Constants are left alone so that `degree = 1` keeps a linear drift linear.
pub fn perturb_drift(
    f0: &PolyVectorField,
    epsilon: &Rational,
    degree: u32,
    rng: &mut ChaCha8Rng,
) -> PolyVectorField {
    let n = f0.dim();
    let monos = monomials(n, degree);
    let comps = f0
        .components()
        .iter()
        .map(|p| {
            let noise = Polynomial::from_terms(
                n,
                monos
                    .iter()
                    .map(|m| (m.clone(), epsilon * random_rational(rng, 1000, 1000))),
            )
            .expect("exponent length matches");
            p + &noise
        })
        .collect();
    PolyVectorField::new(comps).expect("dimension preserved")
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenericityOptions {
    pub epsilon: Rational,
    pub trials: usize,
    pub degree: u32,
    pub seed: u64,
    /// Fixed sample points; when empty, `sample_points` are drawn from `seed`.
    pub points: Vec<Vec<Rational>>,
    pub sample_points: usize,
    pub check: CheckOptions,
}

impl Default for GenericityOptions {
    fn default() -> Self {
        GenericityOptions {
            epsilon: crate::rational::ratio(1, 10),
            trials: 200,
            degree: 2,
            seed: 0,
            points: Vec::new(),
            sample_points: 5,
            check: CheckOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenericityReport {
    pub epsilon: String,
    pub degree: u32,
    pub trials: usize,
    pub passes: usize,
    pub inconclusive: usize,
    pub fraction: f64,
    pub points: Vec<Vec<String>>,
}

/// Fraction of random drift perturbations for which condition 1 passes at
/// the sample points.
pub fn genericity_experiment(
    sys: &ControlAffineSystem,
    opts: &GenericityOptions,
) -> Result<GenericityReport> {
    if opts.trials == 0 {
        return Err(Error::Invalid("at least one trial is required".into()));
    }
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points = if opts.points.is_empty() {
        (0..opts.sample_points.max(1)).map(|_| random_point(&mut rng, n)).collect()
    } else {
        opts.points.clone()
    };
    let verdicts: Vec<Verdict> = (0..opts.trials)
        .into_par_iter()
        .map(|trial| {
            let mut trng = ChaCha8Rng::seed_from_u64(opts.seed);
            trng.set_stream(trial as u64 + 1);
            let f0 = perturb_drift(sys.drift(), &opts.epsilon, opts.degree, &mut trng);
            let perturbed =
                ControlAffineSystem::new(f0, sys.controls().to_vec(), sys.diffusion().clone())?;
            Ok(check_condition_1(&perturbed, &points, &opts.check)?.verdict)
        })
        .collect::<Result<_>>()?;
    let passes = verdicts.iter().filter(|v| **v == Verdict::Pass).count();
    let inconclusive = verdicts.iter().filter(|v| **v == Verdict::InconclusiveAtCap).count();
    Ok(GenericityReport {
        epsilon: format_rational(&opts.epsilon),
        degree: opts.degree,
        trials: opts.trials,
        passes,
        inconclusive,
        fraction: passes as f64 / opts.trials as f64,
        points: points.iter().map(|p| p.iter().map(format_rational).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolyMatrixMap;

    #[test]
    fn monomial_enumeration_skips_constants() {
        let m = monomials(2, 2);
        assert_eq!(m.len(), 5);
        assert!(m.iter().all(|e| (1..=2).contains(&e.iter().sum::<u32>())));
        assert_eq!(monomials(3, 1).len(), 3);
        assert!(monomials(2, 0).is_empty());
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let f0 = PolyVectorField::new(vec![Polynomial::var(2, 1), Polynomial::zero(2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb_drift(&f0, &Rational::from_integer(0.into()), 2, &mut rng), f0);
        let p = perturb_drift(&f0, &crate::rational::ratio(1, 10), 1, &mut rng);
        assert!(p.is_linear());
    }

    #[test]
    fn zero_dynamics_probe_has_rank_zero() {
        let sys = CompiledSystem::new(
            &ControlAffineSystem::new(PolyVectorField::zero(1), vec![], PolyMatrixMap::zeros(1, 1, 1))
                .unwrap(),
        );
        let u = ControlSignal::zero(0, 1.0, 0.1).unwrap();
        let r = empirical_accessibility(&sys, &u, &[0.5], &DMatrix::identity(1, 1), &ProbeOptions::default())
            .unwrap();
        assert_eq!(r.rank, 0);
        assert!(!r.inconclusive);
        let bad = ProbeOptions {
            directions: Some(1),
            ..Default::default()
        };
        assert!(empirical_accessibility(&sys, &u, &[0.5], &DMatrix::identity(1, 1), &bad).is_err());
    }
}
