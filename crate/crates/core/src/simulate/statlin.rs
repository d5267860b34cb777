use nalgebra::{DMatrix, DVector};

use super::{CompiledSystem, ControlSignal};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetrize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    /// Trajectory is truncated once `|m|` or `|P|` exceeds this.
    pub blowup_bound: f64,
    /// Substep halvings tried when a step loses positive definiteness.
    pub max_halvings: u32,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            blowup_bound: 1e8,
            max_halvings: 3,
        }
    }
}

/// Mean/covariance trajectory on the control grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    /// Exactly symmetric.
    pub covariances: Vec<DMatrix<f64>>,
    /// Smallest eigenvalue of each stored covariance.
    pub min_eigenvalues: Vec<f64>,
    pub pd: Vec<bool>,
    /// Number of steps that needed substep refinement.
    pub refined_steps: usize,
    /// Set when the trajectory was truncated.
    pub diagnostic: Option<String>,
}

impl SimulationResult {
    pub fn completed(&self) -> bool {
        self.diagnostic.is_none()
    }

    pub fn final_mean(&self) -> &DVector<f64> {
        self.means.last().expect("at least the initial state")
    }

    pub fn final_covariance(&self) -> &DMatrix<f64> {
        self.covariances.last().expect("at least the initial state")
    }
}

fn check_initial(sys: &CompiledSystem, u: &ControlSignal, m0: &[f64], p0: &DMatrix<f64>) -> Result<()> {
    let n = sys.n();
    if m0.len() != n || p0.nrows() != n || p0.ncols() != n {
        return Err(Error::Dimension(format!("initial state must have dimension {n}")));
    }
    if u.num_controls() != sys.num_controls() {
        return Err(Error::Dimension(format!(
            "control signal has {} channels, system has {}",
            u.num_controls(),
            sys.num_controls()
        )));
    }
    if (p0 - p0.transpose()).amax() > 1e-12 * p0.amax().max(1.0) {
        return Err(Error::NotSymmetric);
    }
    if min_eigenvalue(p0) <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

fn moment_rhs(
    sys: &CompiledSystem,
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    u: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let a = sys.jacobian(m.as_slice(), u);
    let dm = sys.drift(m.as_slice(), u);
    let dp = &a * p + p * a.transpose() + sys.noise_covariance(m.as_slice());
    (dm, dp)
}

fn rk4_moments(
    sys: &CompiledSystem,
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    u: &[f64],
    h: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let (k1m, k1p) = moment_rhs(sys, m, p, u);
    let (k2m, k2p) = moment_rhs(sys, &(m + &k1m * (h / 2.0)), &(p + &k1p * (h / 2.0)), u);
    let (k3m, k3p) = moment_rhs(sys, &(m + &k2m * (h / 2.0)), &(p + &k2p * (h / 2.0)), u);
    let (k4m, k4p) = moment_rhs(sys, &(m + &k3m * h), &(p + &k3p * h), u);
    let m1 = m + (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
    let p1 = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
    (m1, symmetrize(&p1))
}

fn exceeds(bound: f64, m: &DVector<f64>, p: &DMatrix<f64>) -> bool {
    !(m.amax() <= bound && p.amax() <= bound)
}

/// Fixed-step RK4 on the coupled mean/covariance equations.
///
/// Each step is taken once at the control step. If it loses positive
/// definiteness it is retaken with 2, 4, .. substeps up to
/// `max_halvings`; a persistent loss or a blow-up truncates the result.
pub fn integrate_statlin(
    sys: &CompiledSystem,
    u: &ControlSignal,
    m0: &[f64],
    p0: &DMatrix<f64>,
    opts: &IntegrateOptions,
) -> Result<SimulationResult> {
    check_initial(sys, u, m0, p0)?;
    let dt = u.dt();
    let mut m = DVector::from_column_slice(m0);
    let mut p = symmetrize(p0);
    let lam0 = min_eigenvalue(&p);
    let mut res = SimulationResult {
        times: vec![0.0],
        means: vec![m.clone()],
        covariances: vec![p.clone()],
        min_eigenvalues: vec![lam0],
        pd: vec![lam0 > 0.0],
        refined_steps: 0,
        diagnostic: None,
    };
    for k in 0..u.steps() {
        let uk = u.at_step(k);
        let mut accepted = None;
        for halving in 0..=opts.max_halvings {
            let sub = 1usize << halving;
            let h = dt / sub as f64;
            let (mut mm, mut pp) = (m.clone(), p.clone());
            for _ in 0..sub {
                (mm, pp) = rk4_moments(sys, &mm, &pp, uk, h);
            }
            if exceeds(opts.blowup_bound, &mm, &pp) {
                accepted = Some((mm, pp, f64::NAN, halving));
                break;
            }
            let lam = min_eigenvalue(&pp);
            if lam > 0.0 || halving == opts.max_halvings {
                accepted = Some((mm, pp, lam, halving));
                break;
            }
        }
        let (mm, pp, lam, halving) = accepted.expect("loop always accepts");
        let t = (k + 1) as f64 * dt;
        if lam.is_nan() {
            res.diagnostic = Some(format!("blow-up before t = {t}"));
            break;
        }
        if halving > 0 {
            res.refined_steps += 1;
        }
        m = mm;
        p = pp;
        res.times.push(t);
        res.means.push(m.clone());
        res.covariances.push(p.clone());
        res.min_eigenvalues.push(lam);
        res.pd.push(lam > 0.0);
        if lam <= 0.0 {
            res.diagnostic = Some(format!("positive definiteness lost at t = {t}"));
            break;
        }
    }
    Ok(res)
}

/// Mean trajectory and covariance from the fundamental-matrix formula.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormResult {
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// `Phi(t_k, 0)`.
    pub transitions: Vec<DMatrix<f64>>,
    pub diagnostic: Option<String>,
}

impl ClosedFormResult {
    pub fn final_covariance(&self) -> &DMatrix<f64> {
        self.covariances.last().expect("at least the initial state")
    }

    pub fn final_mean(&self) -> &DVector<f64> {
        self.means.last().expect("at least the initial state")
    }
}

fn rk4_transition(
    sys: &CompiledSystem,
    m: &DVector<f64>,
    phi: &DMatrix<f64>,
    u: &[f64],
    h: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let rhs = |m: &DVector<f64>, phi: &DMatrix<f64>| {
        (sys.drift(m.as_slice(), u), sys.jacobian(m.as_slice(), u) * phi)
    };
    let (k1m, k1f) = rhs(m, phi);
    let (k2m, k2f) = rhs(&(m + &k1m * (h / 2.0)), &(phi + &k1f * (h / 2.0)));
    let (k3m, k3f) = rhs(&(m + &k2m * (h / 2.0)), &(phi + &k2f * (h / 2.0)));
    let (k4m, k4f) = rhs(&(m + &k3m * h), &(phi + &k3f * h));
    (
        m + (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0),
        phi + (k1f + k2f * 2.0 + k3f * 2.0 + k4f) * (h / 6.0),
    )
}

/// `P(t) = Phi(t,0) [P0 + int_0^t Phi(s,0)^-1 G(s) Phi(s,0)^-T ds] Phi(t,0)^T`
/// with `G = g g^T` along the RK4 mean trajectory and trapezoidal quadrature.
pub fn lyapunov_closed_form(
    sys: &CompiledSystem,
    u: &ControlSignal,
    m0: &[f64],
    p0: &DMatrix<f64>,
    opts: &IntegrateOptions,
) -> Result<ClosedFormResult> {
    check_initial(sys, u, m0, p0)?;
    let n = sys.n();
    let dt = u.dt();
    let mut m = DVector::from_column_slice(m0);
    let mut phi = DMatrix::identity(n, n);
    let p0 = symmetrize(p0);
    let integrand = |m: &DVector<f64>, phi: &DMatrix<f64>| -> Option<DMatrix<f64>> {
        let inv = phi.clone().lu().try_inverse()?;
        Some(&inv * sys.noise_covariance(m.as_slice()) * inv.transpose())
    };
    let mut res = ClosedFormResult {
        times: vec![0.0],
        means: vec![m.clone()],
        covariances: vec![p0.clone()],
        transitions: vec![phi.clone()],
        diagnostic: None,
    };
    let mut acc = DMatrix::zeros(n, n);
    let mut prev = integrand(&m, &phi).expect("identity is invertible");
    for k in 0..u.steps() {
        let t = (k + 1) as f64 * dt;
        (m, phi) = rk4_transition(sys, &m, &phi, u.at_step(k), dt);
        if !(m.amax() <= opts.blowup_bound && phi.amax() <= opts.blowup_bound) {
            res.diagnostic = Some(format!("blow-up before t = {t}"));
            break;
        }
        let Some(cur) = integrand(&m, &phi) else {
            res.diagnostic = Some(format!("singular fundamental matrix at t = {t}"));
            break;
        };
        acc += (&prev + &cur) * (dt / 2.0);
        prev = cur;
        let p = symmetrize(&(&phi * (&p0 + &acc) * phi.transpose()));
        res.times.push(t);
        res.means.push(m.clone());
        res.covariances.push(p);
        res.transitions.push(phi.clone());
    }
    Ok(res)
}
