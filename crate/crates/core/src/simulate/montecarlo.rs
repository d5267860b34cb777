use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{CompiledSystem, ControlSignal};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloOptions {
    pub paths: usize,
    pub seed: u64,
    /// Moments are recorded every `record_every` steps and at the horizon.
    pub record_every: usize,
    /// A path whose state leaves this box or turns non-finite is excluded.
    pub blowup_bound: f64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            paths: 10_000,
            seed: 0,
            record_every: 100,
            blowup_bound: 1e8,
        }
    }
}

/// Sample moments of the SDE at the recorded times.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub times: Vec<f64>,
    pub mean: Vec<DVector<f64>>,
    /// Unbiased sample covariance.
    pub covariance: Vec<DMatrix<f64>>,
    /// Standard error of each mean component.
    pub mean_se: Vec<DVector<f64>>,
    /// Standard error of each covariance entry, from the sample variance
    /// of the centred products.
    pub covariance_se: Vec<DMatrix<f64>>,
    pub paths_used: usize,
    pub excluded: usize,
}

fn record_steps(steps: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut out: Vec<usize> = (0..=steps).step_by(every).collect();
    if *out.last().expect("nonempty") != steps {
        out.push(steps);
    }
    out
}

/// Symmetric square root of a PSD matrix, negative eigenvalues clamped.
fn psd_sqrt(p: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = p.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn normal_vec(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

/// Euler-Maruyama paths started from `N(m0, p0)`; `p0` may be singular.
///
/// Path `i` draws from ChaCha8 stream `i` of the master seed, so results
/// do not depend on scheduling.
pub fn euler_maruyama(
    sys: &CompiledSystem,
    u: &ControlSignal,
    m0: &[f64],
    p0: &DMatrix<f64>,
    opts: &MonteCarloOptions,
) -> Result<MonteCarloResult> {
    let n = sys.n();
    let d = sys.noise_dim();
    if opts.paths < 2 {
        return Err(Error::Invalid("Monte Carlo needs at least two paths".into()));
    }
    if m0.len() != n || p0.nrows() != n || p0.ncols() != n {
        return Err(Error::Dimension(format!("initial state must have dimension {n}")));
    }
    if u.num_controls() != sys.num_controls() {
        return Err(Error::Dimension("control channel count".into()));
    }
    let dt = u.dt();
    let sqdt = dt.sqrt();
    let rec = record_steps(u.steps(), opts.record_every);
    let root = psd_sqrt(p0);
    let mean0 = DVector::from_column_slice(m0);
    let samples: Vec<Option<Vec<DVector<f64>>>> = (0..opts.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(path as u64);
            let x0 = &mean0 + &root * normal_vec(&mut rng, n);
            let mut x = x0.as_slice().to_vec();
            let mut next_x = vec![0.0; n];
            let mut dw = vec![0.0; d];
            let mut out = Vec::with_capacity(rec.len());
            let mut next = 0;
            for k in 0..=u.steps() {
                if rec[next] == k {
                    out.push(DVector::from_column_slice(&x));
                    next += 1;
                }
                if k == u.steps() {
                    break;
                }
                for w in dw.iter_mut() {
                    *w = sqdt * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                }
                next_x.copy_from_slice(&x);
                sys.add_drift(&x, u.at_step(k), dt, &mut next_x);
                sys.add_noise(&x, &dw, &mut next_x);
                std::mem::swap(&mut x, &mut next_x);
                if !x.iter().all(|v| v.abs() <= opts.blowup_bound) {
                    return None;
                }
            }
            Some(out)
        })
        .collect();
    let kept: Vec<&Vec<DVector<f64>>> = samples.iter().flatten().collect();
    let used = kept.len();
    let excluded = opts.paths - used;
    let mut res = MonteCarloResult {
        times: rec.iter().map(|&k| k as f64 * dt).collect(),
        mean: Vec::with_capacity(rec.len()),
        covariance: Vec::with_capacity(rec.len()),
        mean_se: Vec::with_capacity(rec.len()),
        covariance_se: Vec::with_capacity(rec.len()),
        paths_used: used,
        excluded,
    };
    if used < 2 {
        return Err(Error::Invalid(format!(
            "only {used} of {} paths stayed bounded",
            opts.paths
        )));
    }
    let nu = used as f64;
    for r in 0..rec.len() {
        let mean = kept.iter().fold(DVector::zeros(n), |a, s| a + &s[r]) / nu;
        let mut cov = DMatrix::zeros(n, n);
        for s in &kept {
            let c = &s[r] - &mean;
            cov += &c * c.transpose();
        }
        cov /= nu - 1.0;
        let mut var_prod = DMatrix::zeros(n, n);
        for s in &kept {
            let c = &s[r] - &mean;
            let dev = &c * c.transpose() - &cov;
            var_prod += dev.component_mul(&dev);
        }
        var_prod /= nu - 1.0;
        res.mean_se.push(DVector::from_fn(n, |i, _| (cov[(i, i)] / nu).sqrt()));
        res.covariance_se.push(var_prod.map(|v| (v / nu).sqrt()));
        res.mean.push(mean);
        res.covariance.push(cov);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PolyMatrixMap, PolyVectorField};
    use crate::poly::Polynomial;
    use crate::rational::from_i64;
    use crate::system::ControlAffineSystem;

    #[test]
    fn noiseless_paths_follow_the_ode() {
        let f0 = PolyVectorField::new(vec![Polynomial::var(1, 0).scale(&from_i64(-1))]).unwrap();
        let sys = CompiledSystem::new(
            &ControlAffineSystem::new(f0, vec![], PolyMatrixMap::zeros(1, 1, 1)).unwrap(),
        );
        let u = ControlSignal::zero(0, 1.0, 1e-3).unwrap();
        let opts = MonteCarloOptions {
            paths: 16,
            record_every: 1000,
            ..Default::default()
        };
        let r = euler_maruyama(&sys, &u, &[1.0], &DMatrix::zeros(1, 1), &opts).unwrap();
        assert_eq!(r.times.len(), 2);
        let euler = (1.0f64 - 1e-3).powi(1000);
        assert!((r.mean[1][0] - euler).abs() < 1e-12);
        assert!(r.covariance[1][(0, 0)].abs() < 1e-20);
        assert_eq!(r.excluded, 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let f0 = PolyVectorField::new(vec![Polynomial::var(1, 0).scale(&from_i64(-1))]).unwrap();
        let g = PolyMatrixMap::constant(&crate::linalg::QMatrix::identity(1), 1);
        let sys = CompiledSystem::new(&ControlAffineSystem::new(f0, vec![], g).unwrap());
        let u = ControlSignal::zero(0, 0.5, 1e-2).unwrap();
        let opts = MonteCarloOptions {
            paths: 200,
            seed: 7,
            record_every: 10,
            ..Default::default()
        };
        let a = euler_maruyama(&sys, &u, &[1.0], &DMatrix::identity(1, 1), &opts).unwrap();
        let b = euler_maruyama(&sys, &u, &[1.0], &DMatrix::identity(1, 1), &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 6);
        assert!(euler_maruyama(&sys, &u, &[1.0], &DMatrix::identity(1, 1), &MonteCarloOptions { paths: 1, ..opts }).is_err());
    }

    #[test]
    fn record_grid_includes_horizon() {
        assert_eq!(record_steps(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(record_steps(3, 0), vec![0, 1, 2, 3]);
    }
}
