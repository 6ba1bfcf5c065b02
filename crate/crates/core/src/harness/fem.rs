use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::json;

use super::bundle::{num, ResultBundle};
use super::config::{EffectiveDim, FemForward, FemPosterior, FemPrior};
use crate::ensemble::effective_dimension;
use crate::error::Result;
use crate::fem::{
    assemble_mass, fem_forward, fem_prior_covariance, generalized_eigenvalues, load_vector, Coefficients1D, HatBasis, Mesh1D,
};
use crate::gaussian::{posterior_euclidean, posterior_weighted, GaussianMeasure, ObservationModel};
use crate::spectral::{error_metrics, spectral_posterior, Domain, SpectralPosterior, SpectralReference};
use crate::weighted::{discretize, WeightedVector};

/// Quadrature points per half-element for load vectors.
const LOAD_POINTS: usize = 6;

pub(crate) fn prior_mean_interval(x: f64) -> f64 {
    (PI * x).sin()
}

/// Reference-mode draw from the prior followed by noisy observation.
pub(crate) fn synthetic_data(reference: &SpectralReference, forward: &DMatrix<f64>, gamma: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = reference
        .prior_variances()
        .map(|v| v.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng));
    let clean = forward * truth;
    clean.map(|v| v + gamma.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
}

pub fn fem_prior(c: &FemPrior) -> Result<ResultBundle> {
    let (theta, b) = c.theta.constant().zip(c.b.constant()).expect("validated");
    let reference = SpectralReference::new(Domain::Interval, theta, b, c.alpha, c.n_ref)?;
    reference.check_truncation()?;
    let ref_prior = SpectralPosterior::prior(&reference, DVector::zeros(c.n_ref))?;
    let coeffs = Coefficients1D::new(c.theta.clone(), c.b.clone(), c.alpha)?;

    let points: Vec<Result<(usize, f64)>> = c
        .h_list
        .par_iter()
        .map(|&h| {
            let mesh = Mesh1D::with_width(h)?;
            let c0 = fem_prior_covariance(&mesh, &coeffs)?;
            let prior = GaussianMeasure::new(WeightedVector::zeros(c0.space()), c0)?;
            let m = error_metrics(&prior, &HatBasis::new(mesh), &reference, &ref_prior)?;
            Ok((mesh.n_interior(), m.eps_c))
        })
        .collect();

    let mut out = ResultBundle::new("fem-prior", vec!["h", "n", "eps_C"]);
    let mut eps = Vec::new();
    for (&h, p) in c.h_list.iter().zip(points) {
        let (n, e) = match p {
            Ok(v) => v,
            Err(err) => {
                out.point_error(format!("h={h}"), err);
                ((1.0 / h).round() as usize - 1, f64::NAN)
            }
        };
        out.rows.push(vec![num(h), n.to_string(), num(e)]);
        eps.push(e);
    }
    out.fit_check("eps_C", &c.h_list, &eps, Some(&c.acceptance));
    Ok(out)
}

/// `|obs_ref - F P u|` for `u = sin(pi x)` and one `(h, dt)` pair.
fn forward_error(reference_obs: &DVector<f64>, h: f64, dt: f64, c: &FemForward) -> Result<f64> {
    let mesh = Mesh1D::with_width(h)?;
    let space = assemble_mass(&mesh);
    let pu = discretize(&load_vector(&mesh, prior_mean_interval, LOAD_POINTS), &space)?;
    let f = fem_forward(&mesh, dt, &c.centers, c.delta)?;
    Ok((reference_obs - f * pu.coeffs()).norm())
}

pub fn fem_forward_experiment(c: &FemForward) -> Result<ResultBundle> {
    let reference = SpectralReference::new(Domain::Interval, 1.0, 0.0, 1, c.n_ref)?;
    let obs = reference.forward_matrix(&c.centers, c.delta, true) * reference.project(prior_mean_interval);

    let jobs: Vec<(&'static str, f64, f64)> = c
        .h_list
        .iter()
        .map(|&h| ("h", h, c.dt))
        .chain(c.dt_list.iter().map(|&dt| ("dt", c.h, dt)))
        .collect();
    let errs: Vec<Result<f64>> = jobs.par_iter().map(|&(_, h, dt)| forward_error(&obs, h, dt, c)).collect();

    let mut out = ResultBundle::new("fem-forward", vec!["sweep", "h", "n", "dt", "err"]);
    let (mut h_err, mut dt_err) = (Vec::new(), Vec::new());
    for (&(sweep, h, dt), e) in jobs.iter().zip(errs) {
        let e = e.unwrap_or_else(|err| {
            out.point_error(format!("{sweep} sweep, h={h}, dt={dt}"), err);
            f64::NAN
        });
        let n = (1.0 / h).round() as usize - 1;
        out.rows.push(vec![sweep.to_string(), num(h), n.to_string(), num(dt), num(e)]);
        if sweep == "h" {
            h_err.push(e);
        } else {
            dt_err.push(e);
        }
    }
    out.fit_check("err vs h", &c.h_list, &h_err, Some(&c.acceptance));
    out.fit_check("err vs dt", &c.dt_list, &dt_err, Some(&c.acceptance));
    Ok(out)
}

struct PosteriorPoint {
    n: usize,
    dt: f64,
    eps_m: f64,
    eps_c: f64,
    mean_gap: f64,
    cov_gap: f64,
}

fn posterior_point(c: &FemPosterior, h: f64, reference: &SpectralReference, ref_post: &SpectralPosterior, y: &DVector<f64>) -> Result<PosteriorPoint> {
    let dt = c.dt.unwrap_or(h);
    let mesh = Mesh1D::with_width(h)?;
    let coeffs = Coefficients1D::new(c.theta.clone(), c.b.clone(), c.alpha)?;
    let c0 = fem_prior_covariance(&mesh, &coeffs)?;
    let space = c0.space().clone();
    let m0 = discretize(&load_vector(&mesh, prior_mean_interval, LOAD_POINTS), &space)?;
    let prior = GaussianMeasure::new(m0, c0)?;
    let gamma = DMatrix::identity(c.centers.len(), c.centers.len()) * c.gamma;
    let obs = ObservationModel::new(fem_forward(&mesh, dt, &c.centers, c.delta)?, gamma, y.clone())?;

    let post = posterior_weighted(&prior, &obs)?;
    let euc = posterior_euclidean(&prior, &obs)?;
    let mw = post.mean.coeffs();
    let mean_gap = (mw - &euc.mean).norm() / mw.norm();
    let ce_m = space.mass_mul_mat(&euc.cov.transpose()).transpose();
    let cov_gap = (&ce_m - post.cov.matrix()).norm() / post.cov.matrix().norm();

    let m = error_metrics(&post, &HatBasis::new(mesh), reference, ref_post)?;
    Ok(PosteriorPoint {
        n: mesh.n_interior(),
        dt,
        eps_m: m.eps_m,
        eps_c: m.eps_c,
        mean_gap,
        cov_gap,
    })
}

/// Relative tolerances of the weighted/Euclidean agreement.
pub const MEAN_AGREEMENT: f64 = 1e-10;
pub const COV_AGREEMENT: f64 = 1e-9;

pub fn fem_posterior(c: &FemPosterior) -> Result<ResultBundle> {
    let (theta, b) = c.theta.constant().zip(c.b.constant()).expect("validated");
    let reference = SpectralReference::new(Domain::Interval, theta, b, c.alpha, c.n_ref)?;
    reference.check_truncation()?;
    let forward = reference.forward_matrix(&c.centers, c.delta, true);
    let y = synthetic_data(&reference, &forward, c.gamma, c.seed);
    let gamma = DMatrix::identity(c.centers.len(), c.centers.len()) * c.gamma;
    let ref_post = spectral_posterior(&reference, &reference.project(prior_mean_interval), &forward, &gamma, &y)?;

    let points: Vec<Result<PosteriorPoint>> = c
        .h_list
        .par_iter()
        .map(|&h| posterior_point(c, h, &reference, &ref_post, &y))
        .collect();

    let mut out = ResultBundle::new("fem-posterior", vec!["h", "n", "dt", "eps_m", "eps_C"]);
    let (mut em, mut ec) = (Vec::new(), Vec::new());
    let mut agreement = Vec::new();
    let mut agree_ok = true;
    for (&h, p) in c.h_list.iter().zip(points) {
        match p {
            Ok(p) => {
                out.rows.push(vec![num(h), p.n.to_string(), num(p.dt), num(p.eps_m), num(p.eps_c)]);
                em.push(p.eps_m);
                ec.push(p.eps_c);
                agree_ok &= p.mean_gap <= MEAN_AGREEMENT && p.cov_gap <= COV_AGREEMENT;
                agreement.push(json!({"h": h, "mean_rel_gap": p.mean_gap, "cov_rel_gap": p.cov_gap}));
            }
            Err(err) => {
                out.point_error(format!("h={h}"), err);
                let dt = c.dt.unwrap_or(h);
                out.rows.push(vec![num(h), ((1.0 / h).round() as usize - 1).to_string(), num(dt), num(f64::NAN), num(f64::NAN)]);
                em.push(f64::NAN);
                ec.push(f64::NAN);
                agree_ok = false;
            }
        }
    }
    out.fit_check("eps_m", &c.h_list, &em, Some(&c.acceptance));
    out.fit_check("eps_C", &c.h_list, &ec, Some(&c.acceptance));
    out.check(
        "weighted/Euclidean agreement",
        agree_ok,
        format!("mean gap <= {MEAN_AGREEMENT:e}, covariance gap <= {COV_AGREEMENT:e} (relative)"),
    );
    out.details = json!({ "agreement": agreement });
    Ok(out)
}

struct EffDimPoint {
    n: usize,
    r_m: f64,
    min_eig_excess: f64,
}

pub fn effective_dim(c: &EffectiveDim) -> Result<ResultBundle> {
    let (theta, b) = c.theta.constant().zip(c.b.constant()).expect("validated");
    let reference = SpectralReference::new(Domain::Interval, theta, b, c.alpha, c.n_ref)?;
    let r_ref = reference.effective_dimension();
    let coeffs = Coefficients1D::new(c.theta.clone(), c.b.clone(), c.alpha)?;

    let points: Vec<Result<EffDimPoint>> = c
        .h_list
        .par_iter()
        .map(|&h| {
            let mesh = Mesh1D::with_width(h)?;
            let c0 = fem_prior_covariance(&mesh, &coeffs)?;
            let r_m = effective_dimension(&c0)?;
            let eig = generalized_eigenvalues(&mesh, &Coefficients1D::new(c.theta.clone(), c.b.clone(), 1)?)?;
            let min_eig_excess = eig
                .iter()
                .enumerate()
                .map(|(k, &l)| l / reference.eigenvalue(k) - 1.0)
                .fold(f64::INFINITY, f64::min);
            Ok(EffDimPoint {
                n: mesh.n_interior(),
                r_m,
                min_eig_excess,
            })
        })
        .collect();

    let mut out = ResultBundle::new("effective-dim", vec!["h", "n", "r_M", "r_ref", "min_eig_excess"]);
    let (mut bounded, mut above) = (true, true);
    for (&h, p) in c.h_list.iter().zip(points) {
        match p {
            Ok(p) => {
                bounded &= p.r_m <= c.max_ratio * r_ref;
                above &= p.min_eig_excess >= 0.0;
                out.rows.push(vec![num(h), p.n.to_string(), num(p.r_m), num(r_ref), num(p.min_eig_excess)]);
            }
            Err(err) => {
                out.point_error(format!("h={h}"), err);
                bounded = false;
                above = false;
                let n = (1.0 / h).round() as usize - 1;
                out.rows.push(vec![num(h), n.to_string(), num(f64::NAN), num(r_ref), num(f64::NAN)]);
            }
        }
    }
    out.check("r_M bounded", bounded, format!("r_M(C0) <= {} r(C0) = {}", c.max_ratio, c.max_ratio * r_ref));
    out.check("eigenvalues overestimate", above, "every discrete eigenvalue >= its continuum counterpart");
    Ok(out)
}
