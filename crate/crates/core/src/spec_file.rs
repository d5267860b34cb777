//! Versioned JSON system specification.
//!
//! Coefficients are rational strings (`"3/4"`, `"-2"`, `"0.125"`) so the
//! exact pipeline never sees a float. A system is given either as
//! polynomial fields (`drift`, `controls`, `diffusion`) or, for the
//! biaffine case, as `matrices` `[A0, .., A_mu]` with a constant `g`.

use serde::{Deserialize, Serialize};

use crate::biaffine::BiaffineSystem;
use crate::error::{Error, Result};
use crate::field::{PolyMatrixMap, PolyVectorField};
use crate::lift::StatePoint;
use crate::linalg::QMatrix;
use crate::poly::Polynomial;
use crate::rational::{format_rational, parse_rational, Rational};
use crate::simulate::ControlSignal;
use crate::system::ControlAffineSystem;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub exponents: Vec<u32>,
    pub coeff: String,
}

/// One polynomial as a list of terms.
pub type PolySpec = Vec<TermSpec>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub m: Vec<String>,
    pub p: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub dt: f64,
    /// One row per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
    /// Constant value held over `horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub schema: u32,
    pub n: usize,
    pub m_u: usize,
    /// Noise dimension.
    pub d: usize,
    /// `f0`, one polynomial per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<PolySpec>>,
    /// `f1 .. f_mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Vec<PolySpec>>>,
    /// `n x d` polynomial matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<Vec<PolySpec>>>,
    /// Biaffine form `[A0, .., A_mu]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<Vec<String>>>>,
    /// Constant `n x d` diffusion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<StateSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::Spec(msg.into())
}

fn parse_at(s: &str, path: &str) -> Result<Rational> {
    parse_rational(s).map_err(|_| spec_err(format!("{path}: invalid rational {s:?}")))
}

fn parse_vec(v: &[String], len: usize, path: &str) -> Result<Vec<Rational>> {
    if v.len() != len {
        return Err(spec_err(format!("{path}: expected {len} entries, found {}", v.len())));
    }
    v.iter()
        .enumerate()
        .map(|(i, s)| parse_at(s, &format!("{path}[{i}]")))
        .collect()
}

fn parse_matrix(rows: &[Vec<String>], r: usize, c: usize, path: &str) -> Result<QMatrix> {
    if rows.len() != r {
        return Err(spec_err(format!("{path}: expected {r} rows, found {}", rows.len())));
    }
    let parsed = rows
        .iter()
        .enumerate()
        .map(|(i, row)| parse_vec(row, c, &format!("{path}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    QMatrix::from_rows(parsed).map_err(|e| spec_err(format!("{path}: {e}")))
}

fn parse_poly(p: &PolySpec, n: usize, path: &str) -> Result<Polynomial> {
    let mut terms = Vec::with_capacity(p.len());
    for (k, t) in p.iter().enumerate() {
        if t.exponents.len() != n {
            return Err(spec_err(format!(
                "{path}[{k}]: exponents must have length {n}, found {}",
                t.exponents.len()
            )));
        }
        terms.push((t.exponents.clone(), parse_at(&t.coeff, &format!("{path}[{k}].coeff"))?));
    }
    Polynomial::from_terms(n, terms).map_err(|e| spec_err(format!("{path}: {e}")))
}

fn parse_field(f: &[PolySpec], n: usize, path: &str) -> Result<PolyVectorField> {
    if f.len() != n {
        return Err(spec_err(format!("{path}: expected {n} components, found {}", f.len())));
    }
    let comps = f
        .iter()
        .enumerate()
        .map(|(i, p)| parse_poly(p, n, &format!("{path}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    PolyVectorField::new(comps)
}

fn poly_spec(p: &Polynomial) -> PolySpec {
    p.terms()
        .map(|(m, c)| TermSpec {
            exponents: m.exponents().to_vec(),
            coeff: format_rational(c),
        })
        .collect()
}

fn field_spec(f: &PolyVectorField) -> Vec<PolySpec> {
    f.components().iter().map(poly_spec).collect()
}

impl SystemSpec {
    /// Polynomial-form spec of `sys` with no points or simulation settings.
    pub fn from_system(sys: &ControlAffineSystem) -> Self {
        let d = sys.noise_dim();
        let g = sys.diffusion();
        SystemSpec {
            schema: SCHEMA_VERSION,
            n: sys.n(),
            m_u: sys.num_controls(),
            d,
            drift: Some(field_spec(sys.drift())),
            controls: Some(sys.controls().iter().map(field_spec).collect()),
            diffusion: Some(
                (0..sys.n())
                    .map(|i| (0..d).map(|j| poly_spec(g.get(i, j))).collect())
                    .collect(),
            ),
            matrices: None,
            g: None,
            points: None,
            states: None,
            control: None,
            simulation: None,
            seed: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn is_biaffine_form(&self) -> bool {
        self.matrices.is_some()
    }

    /// Checks the schema version, dimensions and every rational literal.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(spec_err(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.n == 0 {
            return Err(spec_err("n must be positive"));
        }
        self.system()?;
        self.points()?;
        self.states()?;
        if self.control.is_some() {
            self.control_signal(None)?;
        }
        let n = self.n;
        if let Some(sim) = &self.simulation {
            if sim.m0.as_ref().is_some_and(|m| m.len() != n) {
                return Err(spec_err(format!("simulation.m0: expected {n} entries")));
            }
            if sim
                .p0
                .as_ref()
                .is_some_and(|p| p.len() != n || p.iter().any(|r| r.len() != n))
            {
                return Err(spec_err(format!("simulation.p0: expected {n} x {n}")));
            }
        }
        Ok(())
    }

    fn diffusion_map(&self) -> Result<PolyMatrixMap> {
        let (n, d) = (self.n, self.d);
        match (&self.diffusion, &self.g) {
            (Some(_), Some(_)) => Err(spec_err("give either diffusion or g, not both")),
            (None, None) => Ok(PolyMatrixMap::zeros(n, d, n)),
            (None, Some(g)) => Ok(PolyMatrixMap::constant(&parse_matrix(g, n, d, "g")?, n)),
            (Some(rows), None) => {
                if rows.len() != n {
                    return Err(spec_err(format!("diffusion: expected {n} rows")));
                }
                let mut entries = Vec::with_capacity(n * d);
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != d {
                        return Err(spec_err(format!("diffusion[{i}]: expected {d} entries")));
                    }
                    for (j, p) in row.iter().enumerate() {
                        entries.push(parse_poly(p, n, &format!("diffusion[{i}][{j}]"))?);
                    }
                }
                PolyMatrixMap::new(n, d, n, entries)
            }
        }
    }

    /// The polynomial system described by the spec.
    pub fn system(&self) -> Result<ControlAffineSystem> {
        let n = self.n;
        if self.matrices.is_some() {
            if self.drift.is_some() || self.controls.is_some() || self.diffusion.is_some() {
                return Err(spec_err(
                    "matrices form excludes drift, controls and diffusion (use a constant g)",
                ));
            }
            return Ok(self.biaffine()?.to_system());
        }
        match &self.drift {
            None => Err(spec_err("missing drift (or matrices)")),
            Some(f0) => {
                let drift = parse_field(f0, n, "drift")?;
                let controls = self.controls.as_deref().unwrap_or(&[]);
                if controls.len() != self.m_u {
                    return Err(spec_err(format!(
                        "controls: expected m_u = {} fields, found {}",
                        self.m_u,
                        controls.len()
                    )));
                }
                let controls = controls
                    .iter()
                    .enumerate()
                    .map(|(i, f)| parse_field(f, n, &format!("controls[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                ControlAffineSystem::new(drift, controls, self.diffusion_map()?)
            }
        }
    }

    /// The biaffine system, from `matrices` or by recognising linear fields.
    pub fn biaffine(&self) -> Result<BiaffineSystem> {
        let (n, d) = (self.n, self.d);
        let Some(ms) = &self.matrices else {
            return BiaffineSystem::from_system(&self.system()?);
        };
        if ms.len() != self.m_u + 1 {
            return Err(spec_err(format!(
                "matrices: expected m_u + 1 = {} matrices, found {}",
                self.m_u + 1,
                ms.len()
            )));
        }
        let mats = ms
            .iter()
            .enumerate()
            .map(|(k, a)| parse_matrix(a, n, n, &format!("matrices[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        let g = match &self.g {
            Some(g) => parse_matrix(g, n, d, "g")?,
            None => QMatrix::zeros(n, d),
        };
        BiaffineSystem::new(mats, g)
    }

    pub fn points(&self) -> Result<Vec<Vec<Rational>>> {
        self.points
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .enumerate()
            .map(|(k, p)| parse_vec(p, self.n, &format!("points[{k}]")))
            .collect()
    }

    pub fn states(&self) -> Result<Vec<StatePoint>> {
        self.states
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let path = format!("states[{k}]");
                let m = parse_vec(&s.m, self.n, &format!("{path}.m"))?;
                let p = parse_matrix(&s.p, self.n, self.n, &format!("{path}.p"))?;
                StatePoint::new(m, p).map_err(|e| spec_err(format!("{path}: {e}")))
            })
            .collect()
    }

    /// Control signal from the spec, resampled to `dt` when given.
    /// Without a `control` entry the zero control over the simulation
    /// horizon is used.
    pub fn control_signal(&self, dt: Option<f64>) -> Result<ControlSignal> {
        let signal = match &self.control {
            Some(c) => match (&c.values, &c.constant) {
                (Some(_), Some(_)) => return Err(spec_err("control: give values or constant, not both")),
                (Some(v), None) => ControlSignal::new(c.dt, self.m_u, v.clone()),
                (None, Some(v)) => {
                    let horizon = c
                        .horizon
                        .ok_or_else(|| spec_err("control: constant needs a horizon"))?;
                    if v.len() != self.m_u {
                        return Err(spec_err(format!("control.constant: expected {} values", self.m_u)));
                    }
                    ControlSignal::constant(self.m_u, v, horizon, c.dt)
                }
                (None, None) => return Err(spec_err("control: missing values or constant")),
            },
            None => {
                let sim = self.simulation.as_ref();
                let horizon = sim.and_then(|s| s.horizon).unwrap_or(1.0);
                let step = dt.or(sim.and_then(|s| s.dt)).unwrap_or(1e-3);
                ControlSignal::zero(self.m_u, horizon, step)
            }
        }
        .map_err(|e| spec_err(format!("control: {e}")))?;
        match dt {
            Some(dt) if (dt - signal.dt()).abs() > 1e-15 => {
                signal.resampled(dt).map_err(|e| spec_err(format!("--dt: {e}")))
            }
            _ => Ok(signal),
        }
    }
}
