//! CSV tables and JSON summaries of simulation results.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{ClosedFormResult, MonteCarloResult, SimulationResult};
use crate::error::{Error, Result};
use crate::lift::upper_pairs;

/// Column-labelled numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        out.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|x| format!("{x:e}"))).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mean_cols(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn upper_cols(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    upper_pairs(n).map(move |(i, j)| format!("{prefix}{i}{j}"))
}

fn upper_vals(p: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    upper_pairs(p.nrows()).map(|(i, j)| p[(i, j)])
}

fn moment_table(
    times: &[f64],
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
) -> Table {
    let n = means.first().map_or(0, |m| m.len());
    let header = std::iter::once("t".to_string())
        .chain(mean_cols("m", n))
        .chain(upper_cols("P", n))
        .collect();
    let rows = times
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((&t, m), p)| std::iter::once(t).chain(m.iter().copied()).chain(upper_vals(p)).collect())
        .collect();
    Table { header, rows }
}

pub fn statlin_table(r: &SimulationResult) -> Table {
    let mut t = moment_table(&r.times, &r.means, &r.covariances);
    t.header.extend(["min_eig".to_string(), "pd".to_string()]);
    for (row, (lam, pd)) in t.rows.iter_mut().zip(r.min_eigenvalues.iter().zip(&r.pd)) {
        row.push(*lam);
        row.push(if *pd { 1.0 } else { 0.0 });
    }
    t
}

pub fn closed_form_table(r: &ClosedFormResult) -> Table {
    moment_table(&r.times, &r.means, &r.covariances)
}

pub fn monte_carlo_table(r: &MonteCarloResult) -> Table {
    let n = r.mean.first().map_or(0, |m| m.len());
    let header = std::iter::once("t".to_string())
        .chain(mean_cols("mean", n))
        .chain(mean_cols("mean_se", n))
        .chain(upper_cols("cov", n))
        .chain(upper_cols("cov_se", n))
        .collect();
    let rows = (0..r.times.len())
        .map(|k| {
            std::iter::once(r.times[k])
                .chain(r.mean[k].iter().copied())
                .chain(r.mean_se[k].iter().copied())
                .chain(upper_vals(&r.covariance[k]))
                .chain(upper_vals(&r.covariance_se[k]))
                .collect()
        })
        .collect();
    Table { header, rows }
}

fn rows_of(p: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..p.nrows()).map(|i| p.row(i).iter().copied().collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub paths_used: usize,
    pub excluded: usize,
    pub final_mean: Vec<f64>,
    pub final_mean_se: Vec<f64>,
    pub final_covariance: Vec<Vec<f64>>,
    pub final_covariance_se: Vec<Vec<f64>>,
}

/// JSON summary shared by all simulation methods.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub method: String,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub records: usize,
    pub final_time: f64,
    pub final_mean: Vec<f64>,
    pub final_covariance: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pd_throughout: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refined_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl SimulationSummary {
    pub fn statlin(r: &SimulationResult, dt: f64, horizon: f64) -> Self {
        SimulationSummary {
            method: "rk4".into(),
            n: r.final_mean().len(),
            dt,
            horizon,
            records: r.times.len(),
            final_time: *r.times.last().expect("initial state"),
            final_mean: r.final_mean().iter().copied().collect(),
            final_covariance: rows_of(r.final_covariance()),
            min_eigenvalue: r.min_eigenvalues.iter().copied().reduce(f64::min),
            pd_throughout: Some(r.pd.iter().all(|&b| b)),
            refined_steps: Some(r.refined_steps),
            monte_carlo: None,
            diagnostic: r.diagnostic.clone(),
        }
    }

    pub fn closed_form(r: &ClosedFormResult, dt: f64, horizon: f64) -> Self {
        SimulationSummary {
            method: "closedform".into(),
            n: r.final_mean().len(),
            dt,
            horizon,
            records: r.times.len(),
            final_time: *r.times.last().expect("initial state"),
            final_mean: r.final_mean().iter().copied().collect(),
            final_covariance: rows_of(r.final_covariance()),
            min_eigenvalue: None,
            pd_throughout: None,
            refined_steps: None,
            monte_carlo: None,
            diagnostic: r.diagnostic.clone(),
        }
    }

    pub fn monte_carlo(r: &MonteCarloResult, dt: f64, horizon: f64) -> Self {
        let last = r.times.len() - 1;
        let mean: Vec<f64> = r.mean[last].iter().copied().collect();
        let cov = rows_of(&r.covariance[last]);
        SimulationSummary {
            method: "mc".into(),
            n: mean.len(),
            dt,
            horizon,
            records: r.times.len(),
            final_time: r.times[last],
            final_mean: mean.clone(),
            final_covariance: cov.clone(),
            min_eigenvalue: None,
            pd_throughout: None,
            refined_steps: None,
            monte_carlo: Some(MonteCarloSummary {
                paths_used: r.paths_used,
                excluded: r.excluded,
                final_mean: mean,
                final_mean_se: r.mean_se[last].iter().copied().collect(),
                final_covariance: cov,
                final_covariance_se: rows_of(&r.covariance_se[last]),
            }),
            diagnostic: None,
        }
    }
}
