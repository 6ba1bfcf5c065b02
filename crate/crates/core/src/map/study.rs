//! Refinement studies of MAP estimators over nested discretizations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{om_minimize, BurgersForward, ForwardModel, LinearForward, MinimizeOptions, OMFunctional, SpectralGalerkinBurgers};
use crate::ensemble::{factor_prior, PriorFactor};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, fem_forward, fem_prior_covariance, prolongation, Coefficients1D, HatBasis, Mesh1D};
use crate::weighted::{BasisEvaluator, WeightedSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapModel {
    /// P1 elements on (0,1), heat flow to unit time, local averages. `n` counts cells.
    LinearFem,
    /// Fourier modes on the circle, linear heat flow to `t_obs`, point values. `n` counts wavenumbers.
    LinearSpectral,
    /// Fourier-Galerkin viscous Burgers to `t_obs`, point values. `n` counts wavenumbers.
    Burgers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapProblem {
    pub model: MapModel,
    #[serde(default = "defaults::nu")]
    pub nu: f64,
    #[serde(default = "defaults::t_obs")]
    pub t_obs: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::obs_points")]
    pub obs_points: Vec<f64>,
    /// Observation noise covariance is `gamma_scale * I`.
    #[serde(default = "defaults::gamma_scale")]
    pub gamma_scale: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: u32,
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Optimizer starts per level: the prior mean and then prior draws.
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
    /// Local-average radius for the finite element model.
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    /// Points at which minimizers are sampled in the report.
    #[serde(default = "defaults::sample_points")]
    pub sample_points: usize,
}

mod defaults {
    pub fn nu() -> f64 {
        0.05
    }
    pub fn t_obs() -> f64 {
        1e-3
    }
    pub fn dt() -> f64 {
        1e-4
    }
    pub fn obs_points() -> Vec<f64> {
        vec![0.125, 0.375, 0.625, 0.875]
    }
    pub fn gamma_scale() -> f64 {
        1e-4
    }
    pub fn alpha() -> u32 {
        2
    }
    pub fn restarts() -> usize {
        4
    }
    pub fn delta() -> f64 {
        0.05
    }
    pub fn tol() -> f64 {
        1e-10
    }
    pub fn max_iter() -> usize {
        10_000
    }
    pub fn sample_points() -> usize {
        33
    }
}

impl MapProblem {
    pub fn new(model: MapModel, n_list: Vec<usize>, seed: u64) -> Self {
        Self {
            model,
            nu: defaults::nu(),
            t_obs: defaults::t_obs(),
            dt: defaults::dt(),
            obs_points: defaults::obs_points(),
            gamma_scale: defaults::gamma_scale(),
            alpha: defaults::alpha(),
            n_list,
            seed,
            restarts: defaults::restarts(),
            delta: defaults::delta(),
            tol: defaults::tol(),
            max_iter: defaults::max_iter(),
            sample_points: defaults::sample_points(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::config("n_list", "must not be empty"));
        }
        if self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::config("n_list", "every entry must be at least 2"));
        }
        if self.n_list.windows(2).any(|w| w[1] % w[0] != 0) {
            return Err(Error::config("n_list", "consecutive levels must be nested (each divides the next)"));
        }
        if self.obs_points.is_empty() || self.obs_points.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config("obs_points", "need at least one point in [0, 1]"));
        }
        if !(self.gamma_scale > 0.0) {
            return Err(Error::config("gamma_scale", "must be positive"));
        }
        if self.alpha == 0 {
            return Err(Error::config("alpha", "must be at least 1"));
        }
        if !(self.nu > 0.0) {
            return Err(Error::config("nu", "must be positive"));
        }
        if !(self.t_obs >= 0.0) || !(self.dt > 0.0) {
            return Err(Error::config("t_obs", "need t_obs >= 0 and dt > 0"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts", "need at least one start"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta", "must be positive"));
        }
        Ok(())
    }

    fn gamma(&self) -> DMatrix<f64> {
        DMatrix::identity(self.obs_points.len(), self.obs_points.len()) * self.gamma_scale
    }

    fn burgers(&self, n: usize, nonlinear: bool) -> Result<SpectralGalerkinBurgers> {
        let mut m = SpectralGalerkinBurgers::new(n, self.nu, self.t_obs, self.dt, self.obs_points.clone())?;
        m.nonlinear = nonlinear;
        Ok(m)
    }
}

/// One refinement level.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementRow {
    pub n: usize,
    /// Starts that converged.
    pub restarts: usize,
    pub i_min: f64,
    /// `L2` distance of the extended minimizer to the one at the previous level.
    pub succ_diff: Option<f64>,
    pub grad_norm: f64,
    /// Final values of all starts, `NaN` where the start failed.
    pub restart_values: Vec<f64>,
    /// Minimizer sampled on a uniform grid of `[0, 1]`.
    pub samples: Vec<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub minimizer: Option<DVector<f64>>,
}

/// A discretization level: functional, `L2` structure and evaluator of extensions.
struct Level {
    om: OMFunctional,
    factor: PriorFactor,
    space: WeightedSpace,
    eval: Box<dyn BasisEvaluator + Send + Sync>,
}

struct FourierEval(SpectralGalerkinBurgers);

impl BasisEvaluator for FourierEval {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, coeffs: &[f64], x: f64) -> f64 {
        self.0.evaluate(&DVector::from_column_slice(coeffs), x)
    }
}

fn fourier_factor(m: &SpectralGalerkinBurgers, alpha: u32) -> Result<PriorFactor> {
    let space = WeightedSpace::euclidean(m.dim());
    factor_prior(&space.operator(DMatrix::from_diagonal(&m.prior_variances(alpha)))?)
}

fn fem_setup(p: &MapProblem, cells: usize) -> Result<(Mesh1D, PriorFactor, WeightedSpace, DMatrix<f64>)> {
    let mesh = Mesh1D::new(cells - 1)?;
    let space = assemble_mass(&mesh);
    let c0 = fem_prior_covariance(&mesh, &Coefficients1D::constant(1.0, 1.0, p.alpha)?)?;
    let factor = factor_prior(&c0)?;
    let f = fem_forward(&mesh, mesh.h(), &p.obs_points, p.delta)?;
    Ok((mesh, factor, space, f))
}

/// Synthetic data from a fine-level truth drawn from the prior.
fn synthetic_data(p: &MapProblem) -> Result<DVector<f64>> {
    let fine = 2 * p.n_list.iter().copied().max().unwrap_or(2);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (forward, factor): (Box<dyn ForwardModel>, PriorFactor) = match p.model {
        MapModel::LinearFem => {
            let (_, factor, _, f) = fem_setup(p, fine)?;
            (Box::new(LinearForward(f)), factor)
        }
        MapModel::LinearSpectral | MapModel::Burgers => {
            let m = p.burgers(fine, p.model == MapModel::Burgers)?;
            let factor = fourier_factor(&m, p.alpha)?;
            (Box::new(BurgersForward(m)), factor)
        }
    };
    let xi = DVector::from_fn(factor.l.ncols(), |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
    let truth = &factor.l * xi;
    let clean = forward.eval(&truth)?;
    let sigma = p.gamma_scale.sqrt();
    Ok(clean.map(|v| v + sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)))
}

fn level(p: &MapProblem, n: usize, y: &DVector<f64>) -> Result<Level> {
    let gamma = p.gamma();
    match p.model {
        MapModel::LinearFem => {
            let (mesh, factor, space, f) = fem_setup(p, n)?;
            let om = OMFunctional::new(Arc::new(LinearForward(f)), y.clone(), &gamma, DVector::zeros(space.dim()), &factor)?;
            Ok(Level {
                om,
                factor,
                space,
                eval: Box::new(HatBasis::new(mesh)),
            })
        }
        MapModel::LinearSpectral | MapModel::Burgers => {
            let m = p.burgers(n, p.model == MapModel::Burgers)?;
            let factor = fourier_factor(&m, p.alpha)?;
            let space = WeightedSpace::euclidean(m.dim());
            let forward: Arc<dyn ForwardModel> = if p.model == MapModel::LinearSpectral {
                let eye = DMatrix::identity(m.dim(), m.dim());
                let mut cols = Vec::with_capacity(m.dim());
                for c in eye.column_iter() {
                    cols.push(m.observe(&m.solve(&c.into_owned())?));
                }
                Arc::new(LinearForward(DMatrix::from_columns(&cols)))
            } else {
                Arc::new(BurgersForward(m.clone()))
            };
            let om = OMFunctional::new(forward, y.clone(), &gamma, DVector::zeros(space.dim()), &factor)?;
            Ok(Level {
                om,
                factor,
                space,
                eval: Box::new(FourierEval(m)),
            })
        }
    }
}

/// `L2` distance between the extensions of a coarse and a fine minimizer.
fn extension_distance(p: &MapProblem, coarse_n: usize, coarse: &DVector<f64>, fine_n: usize, fine: &Level, u: &DVector<f64>) -> Result<f64> {
    let lifted = match p.model {
        MapModel::LinearFem => prolongation(&Mesh1D::new(coarse_n - 1)?, &Mesh1D::new(fine_n - 1)?)? * coarse,
        MapModel::LinearSpectral | MapModel::Burgers => {
            let mut v = DVector::zeros(2 * fine_n);
            v.rows_mut(0, coarse.len()).copy_from(coarse);
            v
        }
    };
    Ok(fine.space.norm_raw(&(lifted - u)))
}

fn minimize_level(p: &MapProblem, n: usize, lvl: &Level) -> (Vec<Result<super::Minimum>>, DVector<f64>) {
    let opts = MinimizeOptions {
        tol: p.tol,
        max_iter: p.max_iter,
        ..Default::default()
    };
    let m0 = lvl.om.prior_mean().clone();
    let results: Vec<_> = (0..p.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                m0.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed_0000);
                rng.set_stream((n as u64) << 16 | r as u64);
                let xi = DVector::from_fn(lvl.factor.l.ncols(), |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
                &m0 + &lvl.factor.l * xi
            };
            om_minimize(&lvl.om, &start, &opts)
        })
        .collect();
    (results, m0)
}

/// Minimizes the functional at every level of `p.n_list` and compares consecutive minimizers.
///
/// Each level keeps the best of its starts. Optimizer failures are recorded in the row.
pub fn map_refinement_study(p: &MapProblem) -> Result<Vec<RefinementRow>> {
    p.validate()?;
    let y = synthetic_data(p)?;
    let levels: Vec<Result<Level>> = p.n_list.par_iter().map(|&n| level(p, n, &y)).collect();
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(p.n_list.len());
    let mut prev: Option<(usize, DVector<f64>)> = None;
    let grid: Vec<f64> = (0..p.sample_points)
        .map(|i| i as f64 / (p.sample_points.max(2) - 1) as f64)
        .collect();
    let solved: Vec<_> = levels
        .par_iter()
        .zip(p.n_list.par_iter())
        .map(|(lvl, &n)| lvl.as_ref().ok().map(|l| minimize_level(p, n, l)))
        .collect();
    for ((lvl, &n), solved) in levels.into_iter().zip(&p.n_list).zip(solved) {
        let mut row = RefinementRow {
            n,
            restarts: 0,
            i_min: f64::NAN,
            succ_diff: None,
            grad_norm: f64::NAN,
            restart_values: Vec::new(),
            samples: Vec::new(),
            error: None,
            minimizer: None,
        };
        let lvl = match lvl {
            Ok(l) => l,
            Err(e) => {
                row.error = Some(e.to_string());
                rows.push(row);
                prev = None;
                continue;
            }
        };
        let (results, _) = solved.expect("level built");
        let mut best: Option<super::Minimum> = None;
        let mut errors = Vec::new();
        for r in results {
            match r {
                Ok(m) => {
                    row.restart_values.push(m.value);
                    row.restarts += 1;
                    if best.as_ref().is_none_or(|b| m.value < b.value) {
                        best = Some(m);
                    }
                }
                Err(e) => {
                    row.restart_values.push(f64::NAN);
                    errors.push(e.to_string());
                }
            }
        }
        if !errors.is_empty() {
            row.error = Some(errors.join("; "));
        }
        let Some(best) = best else {
            rows.push(row);
            prev = None;
            continue;
        };
        row.i_min = best.value;
        row.grad_norm = best.grad_norm;
        row.samples = grid.iter().map(|&x| lvl.eval.evaluate(best.u.as_slice(), x)).collect();
        if let Some((pn, pu)) = &prev {
            row.succ_diff = Some(extension_distance(p, *pn, pu, n, &lvl, &best.u)?);
        }
        prev = Some((n, best.u.clone()));
        row.minimizer = Some(best.u);
        rows.push(row);
    }
    Ok(rows)
}
