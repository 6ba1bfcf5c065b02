use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use super::bundle::{num, ResultBundle};
use super::config::Eki;
use super::fem::synthetic_data;
use crate::ensemble::{effective_dimension, eki_update, factor_prior, sample_prior, weighted_sample_stats};
use crate::error::Result;
use crate::fem::{fem_forward, fem_prior_covariance, Coefficients1D, Mesh1D};
use crate::gaussian::{posterior_weighted, GaussianMeasure, ObservationModel};
use crate::spectral::{Domain, SpectralReference};
use crate::weighted::{operator_norm_m, WeightedVector};

/// Offset separating observation-noise streams from prior-sample streams.
const NOISE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn eki(c: &Eki) -> Result<ResultBundle> {
    let mesh = Mesh1D::with_width(c.h)?;
    let coeffs = Coefficients1D::new(c.theta.clone(), c.b.clone(), c.alpha)?;
    let c0 = fem_prior_covariance(&mesh, &coeffs)?;
    let space = c0.space().clone();
    let eff_dim = effective_dimension(&c0)?;
    let factor = factor_prior(&c0)?;
    let m0 = WeightedVector::zeros(&space);
    let prior = GaussianMeasure::new(m0.clone(), c0)?;

    let f = fem_forward(&mesh, c.h, &c.centers, c.delta)?;
    // data from a smooth reference draw; only the exact posterior below depends on it
    let reference = SpectralReference::new(Domain::Interval, 1.0, 1.0, c.alpha, 256)?;
    let ref_forward = reference.forward_matrix(&c.centers, c.delta, true);
    let y = synthetic_data(&reference, &ref_forward, c.gamma, c.seed_base);
    let gamma = DMatrix::identity(c.centers.len(), c.centers.len()) * c.gamma;
    let obs = ObservationModel::new(f, gamma, y)?;
    let post = posterior_weighted(&prior, &obs)?;

    let jobs: Vec<(usize, u64)> = c
        .j_list
        .iter()
        .flat_map(|&j| (0..c.seeds as u64).map(move |s| (j, c.seed_base + s)))
        .collect();
    let results: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(j, seed)| {
            let ens = sample_prior(&factor, &m0, j, seed)?;
            let updated = eki_update(&ens, &obs, seed ^ NOISE_SEED_OFFSET)?;
            let stats = weighted_sample_stats(&updated)?;
            let err_mean = space.norm_raw(&(stats.mean.coeffs() - post.mean.coeffs()));
            let diff = space.operator(stats.cov.matrix() - post.cov.matrix())?;
            Ok((err_mean, operator_norm_m(&diff)))
        })
        .collect();

    let mut out = ResultBundle::new("eki", vec!["n", "J", "seed", "err_mean", "err_cov", "eff_dim"]);
    let n = space.dim();
    let mut per_j: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); c.j_list.len()];
    for (idx, (&(j, seed), r)) in jobs.iter().zip(results).enumerate() {
        let (em, ec) = r.unwrap_or_else(|err| {
            out.point_error(format!("J={j}, seed={seed}"), err);
            (f64::NAN, f64::NAN)
        });
        out.rows.push(vec![n.to_string(), j.to_string(), seed.to_string(), num(em), num(ec), num(eff_dim)]);
        if em.is_finite() && ec.is_finite() {
            let slot = &mut per_j[idx / c.seeds];
            slot.0 += em;
            slot.1 += ec;
            slot.2 += 1;
        }
    }
    let js: Vec<f64> = c.j_list.iter().map(|&j| j as f64).collect();
    let mean_err: Vec<f64> = per_j.iter().map(|s| if s.2 > 0 { s.0 / s.2 as f64 } else { f64::NAN }).collect();
    let cov_err: Vec<f64> = per_j.iter().map(|s| if s.2 > 0 { s.1 / s.2 as f64 } else { f64::NAN }).collect();
    out.fit_check("err_mean", &js, &mean_err, Some(&c.acceptance));
    out.fit_check("err_cov", &js, &cov_err, Some(&c.acceptance));
    out.details = json!({
        "effective_dimension": eff_dim,
        "mean_over_seeds": c.j_list.iter().zip(mean_err.iter().zip(&cov_err))
            .map(|(j, (m, cv))| json!({"J": j, "err_mean": m, "err_cov": cv}))
            .collect::<Vec<_>>(),
    });
    Ok(out)
}
