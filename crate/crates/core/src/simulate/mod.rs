//! Numerical side: the mean/covariance ODE, its Lyapunov closed form,
//! Euler-Maruyama Monte Carlo of the underlying SDE and empirical probes.

mod compiled;
mod montecarlo;
pub mod output;
mod probe;
mod statlin;

use serde::Serialize;

use crate::error::{Error, Result};

pub use compiled::CompiledSystem;
pub use montecarlo::{euler_maruyama, MonteCarloOptions, MonteCarloResult};
pub use probe::{
    empirical_accessibility, genericity_experiment, perturb_drift, AccessibilityProbe,
    GenericityOptions, GenericityReport, ProbeOptions,
};
pub use statlin::{integrate_statlin, lyapunov_closed_form, ClosedFormResult, IntegrateOptions, SimulationResult};

/// Piecewise-constant open-loop control on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlSignal {
    dt: f64,
    num_controls: usize,
    values: Vec<Vec<f64>>,
}

impl ControlSignal {
    /// One row of `num_controls` values per step of length `dt`.
    pub fn new(dt: f64, num_controls: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        if dt.is_nan() || dt <= 0.0 || dt.is_infinite() {
            return Err(Error::Invalid("control step must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Invalid("control signal needs at least one step".into()));
        }
        if values.iter().any(|v| v.len() != num_controls) {
            return Err(Error::Dimension(format!(
                "each control step needs {num_controls} values"
            )));
        }
        Ok(ControlSignal {
            dt,
            num_controls,
            values,
        })
    }

    /// Constant control over `horizon`, which must be an integer multiple of `dt`.
    pub fn constant(num_controls: usize, value: &[f64], horizon: f64, dt: f64) -> Result<Self> {
        let steps = steps_for(horizon, dt)?;
        Self::new(dt, num_controls, vec![value.to_vec(); steps])
    }

    pub fn zero(num_controls: usize, horizon: f64, dt: f64) -> Result<Self> {
        Self::constant(num_controls, &vec![0.0; num_controls], horizon, dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.values.len() as f64
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn at_step(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Same signal on a grid `factor` times finer.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        ControlSignal {
            dt: self.dt / factor as f64,
            num_controls: self.num_controls,
            values: self
                .values
                .iter()
                .flat_map(|v| std::iter::repeat_n(v.clone(), factor))
                .collect(),
        }
    }

    /// Resamples onto a grid of step `dt`, which must divide the current step.
    pub fn resampled(&self, dt: f64) -> Result<Self> {
        let ratio = self.dt / dt;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Invalid(format!(
                "step {dt} does not divide the control step {}",
                self.dt
            )));
        }
        Ok(self.refined(k as usize))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn from_flat(&self, flat: &[f64]) -> Self {
        let m = self.num_controls;
        ControlSignal {
            dt: self.dt,
            num_controls: m,
            values: (0..self.values.len())
                .map(|k| flat[k * m..(k + 1) * m].to_vec())
                .collect(),
        }
    }
}

pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if horizon.is_nan() || dt.is_nan() || horizon <= 0.0 || dt <= 0.0 {
        return Err(Error::Invalid("horizon and step must be positive".into()));
    }
    let k = horizon / dt;
    let r = k.round();
    if r < 1.0 || (k - r).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::Invalid(format!(
            "horizon {horizon} is not an integer multiple of step {dt}"
        )));
    }
    Ok(r as usize)
}
