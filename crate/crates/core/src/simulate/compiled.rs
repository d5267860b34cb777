use nalgebra::{DMatrix, DVector};

use crate::field::PolyMatrixMap;
use crate::poly::Polynomial;
use crate::rational::to_f64;
use crate::system::ControlAffineSystem;

#[derive(Clone, Debug)]
struct FloatPoly {
    terms: Vec<(Vec<u32>, f64)>,
}

impl FloatPoly {
    fn new(p: &Polynomial) -> Self {
        FloatPoly {
            terms: p
                .terms()
                .map(|(m, c)| (m.exponents().to_vec(), to_f64(c)))
                .collect(),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&k, &xi)| if k == 0 { acc } else { acc * xi.powi(k as i32) })
            })
            .sum()
    }
}

#[derive(Clone, Debug)]
struct FloatField {
    comps: Vec<FloatPoly>,
    jac: Vec<FloatPoly>,
}

/// Floating-point view of a [`ControlAffineSystem`] for integration.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    n: usize,
    d: usize,
    fields: Vec<FloatField>,
    diffusion: Vec<FloatPoly>,
    constant_noise: Option<DMatrix<f64>>,
}

fn compile_matrix(m: &PolyMatrixMap) -> Vec<FloatPoly> {
    m.entries().iter().map(FloatPoly::new).collect()
}

impl CompiledSystem {
    pub fn new(sys: &ControlAffineSystem) -> Self {
        let fields = sys
            .fields()
            .iter()
            .map(|f| FloatField {
                comps: f.components().iter().map(FloatPoly::new).collect(),
                jac: compile_matrix(&f.jacobian()),
            })
            .collect();
        let diffusion = compile_matrix(sys.diffusion());
        let constant_noise = sys.diffusion().constant_value().map(|g| g.to_f64());
        CompiledSystem {
            n: sys.n(),
            d: sys.noise_dim(),
            fields,
            diffusion,
            constant_noise,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn noise_dim(&self) -> usize {
        self.d
    }

    pub fn num_controls(&self) -> usize {
        self.fields.len() - 1
    }

    fn weights<'a>(&'a self, u: &'a [f64]) -> impl Iterator<Item = (&'a FloatField, f64)> + 'a {
        self.fields
            .iter()
            .zip(std::iter::once(1.0).chain(u.iter().copied()))
            .filter(|(_, w)| *w != 0.0)
    }

    /// `f0(m) + sum_i u_i f_i(m)`.
    pub fn drift(&self, m: &[f64], u: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (f, w) in self.weights(u) {
            for (o, c) in out.iter_mut().zip(&f.comps) {
                *o += w * c.eval(m);
            }
        }
        out
    }

    /// Allocation-free `out += scale * (f0(m) + sum_i u_i f_i(m))`.
    pub fn add_drift(&self, m: &[f64], u: &[f64], scale: f64, out: &mut [f64]) {
        for (f, w) in self.weights(u) {
            for (o, c) in out.iter_mut().zip(&f.comps) {
                if !c.terms.is_empty() {
                    *o += scale * w * c.eval(m);
                }
            }
        }
    }

    /// Allocation-free `out += g(m) dw`.
    pub fn add_noise(&self, m: &[f64], dw: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (i, o) in out.iter_mut().enumerate() {
            for (j, w) in dw.iter().enumerate() {
                let gij = match &self.constant_noise {
                    Some(g) => g[(i, j)],
                    None => self.diffusion[i * d + j].eval(m),
                };
                *o += gij * w;
            }
        }
    }

    /// Jacobian of the controlled drift.
    pub fn jacobian(&self, m: &[f64], u: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for (f, w) in self.weights(u) {
            for i in 0..n {
                for j in 0..n {
                    let e = &f.jac[i * n + j];
                    if !e.terms.is_empty() {
                        out[(i, j)] += w * e.eval(m);
                    }
                }
            }
        }
        out
    }

    pub fn diffusion(&self, m: &[f64]) -> DMatrix<f64> {
        if let Some(g) = &self.constant_noise {
            return g.clone();
        }
        DMatrix::from_fn(self.n, self.d, |i, j| self.diffusion[i * self.d + j].eval(m))
    }

    pub fn noise_covariance(&self, m: &[f64]) -> DMatrix<f64> {
        let g = self.diffusion(m);
        &g * g.transpose()
    }
}
