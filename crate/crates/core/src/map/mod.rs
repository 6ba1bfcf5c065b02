//! MAP estimation through the Onsager-Machlup functional
//! `I(u) = 1/2 |y - F(u)|^2_{Gamma^{-1}} + 1/2 |C0^{-1/2}(u - m0)|^2_M`.
//!
//! The functional is minimized in whitened coordinates `u = m0 + L w` with
//! `C0^E = L L^T`, where the prior term becomes `|w|^2 / 2`.

mod burgers;
mod optimize;
mod study;

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::ensemble::PriorFactor;
use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::linalg;

pub use burgers::{BurgersForward, SpectralGalerkinBurgers};
pub use optimize::{om_minimize, Method, MinimizeOptions, Minimum};
pub use study::{map_refinement_study, MapModel, MapProblem, RefinementRow};

/// Forward map `R^n_M -> R^{d_y}`.
pub trait ForwardModel: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, u: &DVector<f64>) -> Result<DVector<f64>>;

    /// Jacobian at `u` applied to each column of `dirs`, given `fu = F(u)`.
    ///
    /// The default uses forward differences with an absolute step of
    /// `1e-6 (1 + |u|)` along each direction.
    fn jacobian_columns(&self, u: &DVector<f64>, fu: &DVector<f64>, dirs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let step = 1e-6 * (1.0 + u.norm());
        let mut out = DMatrix::zeros(self.output_dim(), dirs.ncols());
        for (k, d) in dirs.column_iter().enumerate() {
            let dn = d.norm();
            if dn == 0.0 {
                continue;
            }
            let t = step / dn;
            let shifted = self.eval(&(u + d * t))?;
            out.set_column(k, &((shifted - fu) / t));
        }
        Ok(out)
    }
}

/// Matrix forward map with exact Jacobian.
#[derive(Debug, Clone)]
pub struct LinearForward(pub DMatrix<f64>);

impl ForwardModel for LinearForward {
    fn input_dim(&self) -> usize {
        self.0.ncols()
    }

    fn output_dim(&self) -> usize {
        self.0.nrows()
    }

    fn eval(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.0 * u)
    }

    fn jacobian_columns(&self, _u: &DVector<f64>, _fu: &DVector<f64>, dirs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.0 * dirs)
    }
}

/// Onsager-Machlup functional of a Gaussian prior and a (possibly nonlinear) forward map.
#[derive(Clone)]
pub struct OMFunctional {
    forward: Arc<dyn ForwardModel>,
    y: DVector<f64>,
    gamma: Cholesky<f64, Dyn>,
    m0: DVector<f64>,
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
}

impl std::fmt::Debug for OMFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OMFunctional")
            .field("dim", &self.dim())
            .field("data_dim", &self.y.len())
            .finish()
    }
}

impl OMFunctional {
    pub fn new(
        forward: Arc<dyn ForwardModel>,
        y: DVector<f64>,
        gamma: &DMatrix<f64>,
        prior_mean: DVector<f64>,
        factor: &PriorFactor,
    ) -> Result<Self> {
        let n = factor.l.nrows();
        if forward.input_dim() != n || prior_mean.len() != n {
            return Err(Error::dim("Onsager-Machlup functional", n, forward.input_dim()));
        }
        if y.len() != forward.output_dim() || gamma.nrows() != y.len() {
            return Err(Error::dim("Onsager-Machlup data", forward.output_dim(), y.len()));
        }
        let gamma = linalg::cholesky(gamma, "noise covariance")?;
        let l_inv = factor
            .l
            .clone()
            .try_inverse()
            .ok_or(Error::Degenerate("prior factor is singular"))?;
        Ok(Self {
            forward,
            y,
            gamma,
            m0: prior_mean,
            l: factor.l.clone(),
            l_inv,
        })
    }

    /// Builds the functional from a Gaussian prior measure.
    pub fn from_prior(
        forward: Arc<dyn ForwardModel>,
        y: DVector<f64>,
        gamma: &DMatrix<f64>,
        prior: &GaussianMeasure,
    ) -> Result<Self> {
        let factor = crate::ensemble::factor_prior(&prior.cov)?;
        Self::new(forward, y, gamma, prior.mean.coeffs().clone(), &factor)
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn to_whitened(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.l_inv * (u - &self.m0)
    }

    pub fn from_whitened(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.m0 + &self.l * w
    }

    fn misfit_weighted(&self, fu: &DVector<f64>) -> DVector<f64> {
        // Gamma^{-1/2} r with Gamma = G G^T
        self.gamma
            .l_dirty()
            .solve_lower_triangular(&(&self.y - fu))
            .expect("nonzero diagonal")
    }

    /// `I(u)`.
    pub fn eval(&self, u: &DVector<f64>) -> Result<f64> {
        let fu = self.forward.eval(u)?;
        let r = self.misfit_weighted(&fu);
        let w = self.to_whitened(u);
        Ok(0.5 * r.norm_squared() + 0.5 * w.norm_squared())
    }

    /// Value and gradient with respect to the whitened coordinates `w`.
    pub fn eval_whitened(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let u = self.from_whitened(w);
        let fu = self.forward.eval(&u)?;
        let r = self.misfit_weighted(&fu);
        let value = 0.5 * r.norm_squared() + 0.5 * w.norm_squared();
        // grad = w - (J L)^T Gamma^{-1} (y - F(u))
        let jl = self.forward.jacobian_columns(&u, &fu, &self.l)?;
        let gr = self
            .gamma
            .l_dirty()
            .tr_solve_lower_triangular(&r)
            .expect("nonzero diagonal");
        Ok((value, w - jl.transpose() * gr))
    }
}

/// `I(u)` for the functional `f`.
pub fn om_eval(f: &OMFunctional, u: &DVector<f64>) -> Result<f64> {
    f.eval(u)
}
