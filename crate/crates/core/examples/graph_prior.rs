//! Graph-based prior on a point cloud sampled from the unit circle.
//!
//! Builds the epsilon-graph at the connectivity length scale, compares the
//! low graph eigenvalues with `(2 pi k)^2 + 1` and reports the prior error
//! against the spectral reference.
//!
//! ```text
//! cargo run --release --example graph_prior
//! ```

use nalgebra::DVector;
use wispi::fem::CoefficientFn;
use wispi::graph::{build_graph, connectivity_scale, graph_elliptic_operator, CellBasis, GraphSpectrum, PointCloud, SamplingMode};
use wispi::gaussian::GaussianMeasure;
use wispi::spectral::{error_metrics, Domain, SpectralPosterior, SpectralReference};
use wispi::weighted::WeightedVector;

fn main() -> wispi::error::Result<()> {
    let reference = SpectralReference::new(Domain::Circle, 1.0, 1.0, 2, 1600)?;
    let ref_prior = SpectralPosterior::prior(&reference, DVector::zeros(1600))?;
    for n in [100, 200, 400] {
        let cloud = PointCloud::new(n, SamplingMode::Equispaced, 0)?;
        let h_n = connectivity_scale(n as f64, 1, 1.25);
        let graph = build_graph(&cloud, h_n, None)?;
        let a = graph_elliptic_operator(&graph, &cloud, &CoefficientFn::Const(1.0))?;
        let spectrum = GraphSpectrum::of_operator(&a)?;
        let c0 = spectrum.prior_covariance(2, None)?;
        let prior = GaussianMeasure::new(WeightedVector::zeros(c0.space()), c0)?;
        let eps = error_metrics(&prior, &CellBasis::new(cloud), &reference, &ref_prior)?;
        let eigs: Vec<String> = spectrum.eigenvalues.rows(0, 5).iter().map(|l| format!("{l:.1}")).collect();
        println!("n = {n:>4}  h_n = {h_n:.4}  connected = {}  eps_C = {:.3e}", graph.is_connected(), eps.eps_c);
        println!("          lowest eigenvalues [{}]", eigs.join(", "));
    }
    let exact: Vec<String> = (0..5).map(|j| format!("{:.1}", reference.eigenvalue(j))).collect();
    println!("continuum eigenvalues       [{}]", exact.join(", "));
    Ok(())
}
