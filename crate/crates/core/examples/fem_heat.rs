//! Finite element prior and Crank-Nicolson heat propagator on (0, 1).
//!
//! Prints the prior variances against the continuum values and the
//! convergence of the discrete heat flow as the mesh is refined.
//!
//! ```text
//! cargo run --example fem_heat
//! ```

use wispi::fem::{crank_nicolson_propagator, fem_prior_covariance, generalized_eigenvalues, load_vector, Coefficients1D, Mesh1D};
use wispi::spectral::{Domain, SpectralReference};
use wispi::weighted::{discretize, weighted_trace};

fn main() -> wispi::error::Result<()> {
    let coeffs = Coefficients1D::constant(1.0, 1.0, 2)?;
    let reference = SpectralReference::new(Domain::Interval, 1.0, 1.0, 2, 4096)?;

    println!("{:>6} {:>12} {:>12} {:>14}", "n", "trace C0", "lambda_1", "lambda_1 exact");
    for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let mesh = Mesh1D::with_width(h)?;
        let c0 = fem_prior_covariance(&mesh, &coeffs)?;
        let lambda = generalized_eigenvalues(&mesh, &coeffs)?;
        println!("{:>6} {:>12.6e} {:>12.6} {:>14.6}", mesh.n_interior(), weighted_trace(&c0), lambda[0], reference.eigenvalue(0));
    }
    println!("continuum trace {:.6e}\n", reference.prior_trace());

    // heat flow of sin(pi x) decays by exp(-pi^2) over unit time
    let exact = (-std::f64::consts::PI.powi(2)).exp();
    println!("{:>6} {:>14} {:>12}", "n", "G u(1/2)", "error");
    for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let mesh = Mesh1D::with_width(h)?;
        let space = wispi::fem::assemble_mass(&mesh);
        let u = discretize(&load_vector(&mesh, |x| (std::f64::consts::PI * x).sin(), 6), &space)?;
        let g = crank_nicolson_propagator(&mesh, h)?;
        let out = &g.propagator * u.coeffs();
        let mid = out[mesh.n_interior() / 2];
        println!("{:>6} {:>14.8e} {:>12.3e}", mesh.n_interior(), mid, (mid - exact).abs());
    }
    Ok(())
}
