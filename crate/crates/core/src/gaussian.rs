//! Exact linear-Gaussian updates on `R^n_M`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::weighted::{
    adjoint_forward, forward_norm, gain_norm, operator_norm_m, WeightedOperator, WeightedSpace,
    WeightedVector,
};

/// Gaussian measure on `R^n_M`; the covariance is an operator on the space.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    pub mean: WeightedVector,
    pub cov: WeightedOperator,
}

impl GaussianMeasure {
    pub fn new(mean: WeightedVector, cov: WeightedOperator) -> Result<Self> {
        mean.space().check(cov.space(), "Gaussian measure")?;
        Ok(Self { mean, cov })
    }

    pub fn space(&self) -> &WeightedSpace {
        self.mean.space()
    }

    /// `C^E = C M^{-1}`, the covariance of the coefficient vector.
    pub fn euclidean_cov(&self) -> DMatrix<f64> {
        let mut ce = self.cov.euclidean_form();
        linalg::symmetrize(&mut ce);
        ce
    }
}

/// Linear observations `y = F u + eta`, `eta ~ N(0, Gamma)`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub forward: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl ObservationModel {
    pub fn new(forward: DMatrix<f64>, gamma: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let d = forward.nrows();
        if gamma.nrows() != d || gamma.ncols() != d {
            return Err(Error::dim("noise covariance", d, gamma.nrows()));
        }
        if y.len() != d {
            return Err(Error::dim("data vector", d, y.len()));
        }
        linalg::cholesky(&gamma, "noise covariance")?;
        Ok(Self { forward, gamma, y })
    }

    pub fn dim(&self) -> usize {
        self.forward.nrows()
    }
}

fn innovation_solve(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut s = s.clone();
    linalg::symmetrize(&mut s);
    Ok(linalg::cholesky(&s, "innovation covariance")?.solve(rhs))
}

/// Kalman gain `C F^nat (F C F^nat + Gamma)^{-1}` on the weighted space.
pub fn kalman_gain(cov: &WeightedOperator, forward: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let space = cov.space();
    let f_nat = adjoint_forward(forward, space)?;
    let cf = cov.matrix() * &f_nat;
    let s = forward * &cf + gamma;
    // K = CF (S)^{-1}  <=>  S^T K^T = (CF)^T, with S symmetric
    Ok(innovation_solve(&s, &cf.transpose())?.transpose())
}

/// Posterior through the weighted formulas with `F^nat = M^{-1} F^T`.
pub fn posterior_weighted(prior: &GaussianMeasure, obs: &ObservationModel) -> Result<GaussianMeasure> {
    let space = prior.space();
    if obs.forward.ncols() != space.dim() {
        return Err(Error::dim("forward map columns", space.dim(), obs.forward.ncols()));
    }
    let gain = kalman_gain(&prior.cov, &obs.forward, &obs.gamma)?;
    let m0 = prior.mean.coeffs();
    let mean = m0 + &gain * (&obs.y - &obs.forward * m0);
    let cov = prior.cov.matrix() - &gain * (&obs.forward * prior.cov.matrix());
    GaussianMeasure::new(space.vector(mean)?, space.operator(cov)?)
}

/// Mean and Euclidean-form covariance `C^E_post = C_post M^{-1}` of the coefficient vector.
#[derive(Debug, Clone)]
pub struct EuclideanPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EuclideanPosterior {
    /// Converts back to the weighted form `C_post = C^E_post M`.
    pub fn to_weighted(&self, space: &WeightedSpace) -> Result<GaussianMeasure> {
        GaussianMeasure::new(
            space.vector(self.mean.clone())?,
            space.operator(space.mass_mul_mat(&self.cov.transpose()).transpose())?,
        )
    }
}

/// Posterior through the Euclidean formulas with `C0^E = C0 M^{-1}` and `F^T`.
pub fn posterior_euclidean(prior: &GaussianMeasure, obs: &ObservationModel) -> Result<EuclideanPosterior> {
    let space = prior.space();
    if obs.forward.ncols() != space.dim() {
        return Err(Error::dim("forward map columns", space.dim(), obs.forward.ncols()));
    }
    let ce = prior.euclidean_cov();
    let cft = &ce * obs.forward.transpose();
    let s = &obs.forward * &cft + &obs.gamma;
    let gain = innovation_solve(&s, &cft.transpose())?.transpose();
    let m0 = prior.mean.coeffs();
    let mean = m0 + &gain * (&obs.y - &obs.forward * m0);
    let mut cov = &ce - &gain * cft.transpose();
    linalg::symmetrize(&mut cov);
    Ok(EuclideanPosterior { mean, cov })
}

/// Constants of the gain continuity bound
/// `||K(C1,F1) - K(C2,F2)|| <= c1 ||C1 - C2|| + c2 ||F1 - F2||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainContinuity {
    pub c1: f64,
    pub c2: f64,
    /// Variant of `c2` whose last term carries `||Gamma^{-1}||^2`, as the
    /// triangle-inequality argument produces.
    pub c2_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainContinuityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_squared: f64,
    pub constants: GainContinuity,
}

impl GainContinuityCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12)
    }
}

pub fn gain_continuity_constants(
    c1: &WeightedOperator,
    f1: &DMatrix<f64>,
    f2: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
) -> Result<GainContinuity> {
    let space = c1.space();
    let g = {
        let inv = linalg::cholesky(gamma, "noise covariance")?.inverse();
        linalg::spectral_norm(&inv)
    };
    let nc = operator_norm_m(c1);
    let nf1 = forward_norm(f1, space);
    let nf2 = forward_norm(f2, space);
    Ok(GainContinuity {
        c1: g * nf2 + g * g * nc * nf1 * nf2 * nf2,
        c2: g * nc + g * g * nc * nc * nf1 * nf1 + g * nc * nc * nf1 * nf2,
        c2_squared: g * nc + g * g * nc * nc * nf1 * nf1 + g * g * nc * nc * nf1 * nf2,
    })
}

/// Evaluates both sides of the continuity bound for one perturbation pair.
pub fn check_gain_continuity(
    c1: &WeightedOperator,
    f1: &DMatrix<f64>,
    c2: &WeightedOperator,
    f2: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
) -> Result<GainContinuityCheck> {
    let space = c1.space();
    space.check(c2.space(), "gain continuity")?;
    let k1 = kalman_gain(c1, f1, gamma)?;
    let k2 = kalman_gain(c2, f2, gamma)?;
    let lhs = gain_norm(&(k1 - k2), space);
    let dc = operator_norm_m(&space.operator(c1.matrix() - c2.matrix())?);
    let df = forward_norm(&(f1 - f2), space);
    let constants = gain_continuity_constants(c1, f1, f2, gamma)?;
    Ok(GainContinuityCheck {
        lhs,
        rhs: constants.c1 * dc + constants.c2 * df,
        rhs_squared: constants.c1 * dc + constants.c2_squared * df,
        constants,
    })
}
