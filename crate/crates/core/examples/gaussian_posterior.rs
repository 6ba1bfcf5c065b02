//! Linear-Gaussian posterior for the heat equation with local-average data.
//!
//! The posterior is computed in the weighted and the Euclidean formulation and
//! both are compared with a spectral reference solution.
//!
//! ```text
//! cargo run --example gaussian_posterior
//! ```

use nalgebra::{DMatrix, DVector};
use wispi::fem::{fem_forward, fem_prior_covariance, Coefficients1D, HatBasis, Mesh1D};
use wispi::gaussian::{posterior_euclidean, posterior_weighted, GaussianMeasure, ObservationModel};
use wispi::spectral::{error_metrics, spectral_posterior, Domain, SpectralReference};
use wispi::weighted::WeightedVector;

fn main() -> wispi::error::Result<()> {
    let centers = [0.2, 0.4, 0.6, 0.8];
    let (delta, noise) = (0.05, 0.01);
    let reference = SpectralReference::new(Domain::Interval, 1.0, 1.0, 2, 2048)?;
    let ref_forward = reference.forward_matrix(&centers, delta, true);
    let gamma = DMatrix::identity(4, 4) * noise;
    let y = DVector::from_vec(vec![0.011, 0.018, 0.017, 0.010]);
    let ref_post = spectral_posterior(&reference, &DVector::zeros(2048), &ref_forward, &gamma, &y)?;

    println!("{:>6} {:>12} {:>12} {:>12}", "n", "eps_m", "eps_C", "route gap");
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
        let mesh = Mesh1D::with_width(h)?;
        let c0 = fem_prior_covariance(&mesh, &Coefficients1D::constant(1.0, 1.0, 2)?)?;
        let prior = GaussianMeasure::new(WeightedVector::zeros(c0.space()), c0)?;
        let obs = ObservationModel::new(fem_forward(&mesh, h, &centers, delta)?, gamma.clone(), y.clone())?;
        let post = posterior_weighted(&prior, &obs)?;
        let euc = posterior_euclidean(&prior, &obs)?;
        let gap = (post.mean.coeffs() - &euc.mean).norm() / post.mean.coeffs().norm();
        let eps = error_metrics(&post, &HatBasis::new(mesh.clone()), &reference, &ref_post)?;
        println!("{:>6} {:>12.4e} {:>12.4e} {:>12.1e}", mesh.n_interior(), eps.eps_m, eps.eps_c, gap);
    }
    Ok(())
}
