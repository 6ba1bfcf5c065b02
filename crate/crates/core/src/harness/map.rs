use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use super::bundle::{num, strictly_decreasing, ResultBundle};
use super::config::{MapLinear, VALUE_SLACK};
use super::fem::{prior_mean_interval, synthetic_data};
use crate::error::Result;
use crate::fem::{fem_forward, fem_prior_covariance, load_vector, Coefficients1D, Mesh1D};
use crate::gaussian::{posterior_weighted, GaussianMeasure, ObservationModel};
use crate::map::{map_refinement_study, om_minimize, LinearForward, MapModel, MapProblem, MinimizeOptions, OMFunctional};
use crate::spectral::{Domain, SpectralReference};
use crate::weighted::discretize;

struct LinearPoint {
    n: usize,
    err: f64,
    iterations: usize,
    grad_norm: f64,
}

pub fn map_linear(c: &MapLinear) -> Result<ResultBundle> {
    let gamma = DMatrix::identity(c.centers.len(), c.centers.len()) * c.gamma;
    let points: Vec<Result<LinearPoint>> = c
        .cases
        .par_iter()
        .map(|case| {
            let mesh = Mesh1D::with_width(case.h)?;
            let c0 = fem_prior_covariance(&mesh, &Coefficients1D::constant(1.0, 1.0, case.alpha)?)?;
            let space = c0.space().clone();
            let m0 = discretize(&load_vector(&mesh, prior_mean_interval, 6), &space)?;
            let prior = GaussianMeasure::new(m0, c0)?;
            let f = fem_forward(&mesh, case.h, &c.centers, c.delta)?;
            let reference = SpectralReference::new(Domain::Interval, 1.0, 1.0, case.alpha, 256)?;
            let y = synthetic_data(&reference, &reference.forward_matrix(&c.centers, c.delta, true), c.gamma, case.seed);
            let obs = ObservationModel::new(f.clone(), gamma.clone(), y.clone())?;
            let post = posterior_weighted(&prior, &obs)?;
            let om = OMFunctional::from_prior(Arc::new(LinearForward(f)), y, &gamma, &prior)?;
            let opts = MinimizeOptions { tol: 1e-10, ..Default::default() };
            let min = om_minimize(&om, prior.mean.coeffs(), &opts)?;
            Ok(LinearPoint {
                n: mesh.n_interior(),
                err: space.norm_raw(&(&min.u - post.mean.coeffs())),
                iterations: min.iterations,
                grad_norm: min.grad_norm,
            })
        })
        .collect();

    let mut out = ResultBundle::new("map-linear", vec!["h", "n", "alpha", "seed", "err_M", "iterations", "grad_norm"]);
    let mut worst: f64 = 0.0;
    for (case, p) in c.cases.iter().zip(points) {
        let p = p.unwrap_or_else(|err| {
            out.point_error(format!("h={}, alpha={}, seed={}", case.h, case.alpha, case.seed), err);
            LinearPoint {
                n: (1.0 / case.h).round() as usize - 1,
                err: f64::NAN,
                iterations: 0,
                grad_norm: f64::NAN,
            }
        });
        worst = if p.err.is_nan() { f64::NAN } else { worst.max(p.err) };
        out.rows.push(vec![
            num(case.h),
            p.n.to_string(),
            case.alpha.to_string(),
            case.seed.to_string(),
            num(p.err),
            p.iterations.to_string(),
            num(p.grad_norm),
        ]);
    }
    out.check(
        "minimizer equals posterior mean",
        worst <= c.max_error,
        format!("max |u* - m_post|_M = {worst:e} (limit {:e})", c.max_error),
    );
    Ok(out)
}

pub fn map_refinement(p: &MapProblem) -> Result<ResultBundle> {
    let rows = map_refinement_study(p)?;
    let mut out = ResultBundle::new("map-burgers", vec!["n", "restarts", "I_min", "succ_diff"]);
    for r in &rows {
        out.rows.push(vec![
            r.n.to_string(),
            r.restarts.to_string(),
            num(r.i_min),
            num(r.succ_diff.unwrap_or(f64::NAN)),
        ]);
        if let Some(e) = &r.error {
            out.point_error(format!("n={}", r.n), e);
        }
    }
    let complete = rows.iter().all(|r| r.restarts > 0);
    let diffs: Vec<f64> = rows.iter().skip(1).map(|r| r.succ_diff.unwrap_or(f64::NAN)).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.i_min).collect();
    out.check("every level minimized", complete, format!("{} levels", rows.len()));
    out.check(
        "successive differences strictly decreasing",
        complete && diffs.iter().all(|d| d.is_finite()) && strictly_decreasing(&diffs),
        format!("{diffs:?}"),
    );
    out.check(
        "minimal values non-increasing",
        complete && values.windows(2).all(|w| w[1] <= w[0] + VALUE_SLACK),
        format!("{values:?} (slack {VALUE_SLACK:e})"),
    );
    let ns: Vec<f64> = rows.iter().skip(1).map(|r| r.n as f64).collect();
    out.fit_check("succ_diff", &ns, &diffs, None);
    if p.model == MapModel::LinearSpectral {
        let bound = -(p.alpha as f64 - 0.5);
        let slope = out.slopes.get("succ_diff").map(|f| f.slope).unwrap_or(f64::NAN);
        out.note("tail-rate decay", slope <= bound, format!("slope {slope:.3} (at most {bound})"));
    }
    out.details = json!({ "levels": rows });
    Ok(out)
}
