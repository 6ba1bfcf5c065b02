//! Ensemble Kalman update with perturbed observations.
//!
//! The ensemble mean approaches the exact posterior mean at the Monte Carlo
//! rate as the ensemble grows.
//!
//! ```text
//! cargo run --release --example eki
//! ```

use nalgebra::{DMatrix, DVector};
use wispi::ensemble::{eki_update, effective_dimension, factor_prior, sample_prior, weighted_sample_stats};
use wispi::fem::{fem_forward, fem_prior_covariance, Coefficients1D, Mesh1D};
use wispi::gaussian::{posterior_weighted, GaussianMeasure, ObservationModel};
use wispi::rate::fit_rate;
use wispi::weighted::WeightedVector;

fn main() -> wispi::error::Result<()> {
    let mesh = Mesh1D::with_width(1.0 / 64.0)?;
    let c0 = fem_prior_covariance(&mesh, &Coefficients1D::constant(1.0, 1.0, 2)?)?;
    let space = c0.space().clone();
    println!("effective dimension r_M(C0) = {:.4}", effective_dimension(&c0)?);

    let m0 = WeightedVector::zeros(&space);
    let factor = factor_prior(&c0)?;
    let prior = GaussianMeasure::new(m0.clone(), c0)?;
    let f = fem_forward(&mesh, 1.0 / 64.0, &[0.2, 0.4, 0.6, 0.8], 0.05)?;
    let obs = ObservationModel::new(f, DMatrix::identity(4, 4) * 0.01, DVector::from_vec(vec![0.01, 0.02, 0.02, 0.01]))?;
    let exact = posterior_weighted(&prior, &obs)?;

    let (mut js, mut errs) = (Vec::new(), Vec::new());
    for j in [25, 100, 400, 1600] {
        let seeds = 20;
        let mut total = 0.0;
        for seed in 0..seeds {
            let ens = sample_prior(&factor, &m0, j, seed)?;
            let stats = weighted_sample_stats(&eki_update(&ens, &obs, 1000 + seed)?)?;
            total += space.norm_raw(&(stats.mean.coeffs() - exact.mean.coeffs()));
        }
        let err = total / seeds as f64;
        println!("J = {j:>5}  mean error {err:.4e}");
        js.push(j as f64);
        errs.push(err);
    }
    let fit = fit_rate(&js, &errs)?;
    println!("slope {:.3} (r^2 {:.3})", fit.slope, fit.r_squared);
    Ok(())
}
