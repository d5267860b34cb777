//! Control-affine SDE `dx = (f0(x) + sum_i u_i f_i(x)) dt + g(x) dW`.

use crate::error::{dim_err, Result};
use crate::field::{PolyMatrixMap, PolyVectorField};
use crate::lift::{lift_control, lift_drift, lifted_dim, LiftedField};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlAffineSystem {
    drift: PolyVectorField,
    controls: Vec<PolyVectorField>,
    diffusion: PolyMatrixMap,
}

impl ControlAffineSystem {
    pub fn new(
        drift: PolyVectorField,
        controls: Vec<PolyVectorField>,
        diffusion: PolyMatrixMap,
    ) -> Result<Self> {
        let n = drift.dim();
        if n == 0 {
            return Err(dim_err("state dimension must be positive"));
        }
        if controls.iter().any(|f| f.dim() != n) {
            return Err(dim_err("control fields must share the drift dimension"));
        }
        if diffusion.nrows() != n || diffusion.num_vars() != n {
            return Err(dim_err(format!(
                "diffusion must have {n} rows over {n} variables"
            )));
        }
        Ok(ControlAffineSystem {
            drift,
            controls,
            diffusion,
        })
    }

    /// Same drift fields with the diffusion removed.
    pub fn without_noise(&self) -> Self {
        let n = self.n();
        ControlAffineSystem {
            drift: self.drift.clone(),
            controls: self.controls.clone(),
            diffusion: PolyMatrixMap::zeros(n, self.noise_dim(), n),
        }
    }

    pub fn n(&self) -> usize {
        self.drift.dim()
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.ncols()
    }

    /// `n + n(n+1)/2`.
    pub fn lifted_dim(&self) -> usize {
        lifted_dim(self.n())
    }

    pub fn drift(&self) -> &PolyVectorField {
        &self.drift
    }

    pub fn controls(&self) -> &[PolyVectorField] {
        &self.controls
    }

    pub fn diffusion(&self) -> &PolyMatrixMap {
        &self.diffusion
    }

    /// `[f0, f1, .., f_mu]`.
    pub fn fields(&self) -> Vec<PolyVectorField> {
        std::iter::once(self.drift.clone())
            .chain(self.controls.iter().cloned())
            .collect()
    }

    /// `[F_{f0,g}, F_{f1}, .., F_{f_mu}]`.
    pub fn lifted_fields(&self) -> Result<Vec<LiftedField>> {
        let mut out = vec![lift_drift(&self.drift, &self.diffusion)?];
        out.extend(self.controls.iter().map(lift_control));
        Ok(out)
    }

    /// Linear drift fields and constant diffusion.
    pub fn is_biaffine(&self) -> bool {
        self.fields().iter().all(|f| f.is_linear() || f.is_zero()) && self.diffusion.is_constant()
    }
}
