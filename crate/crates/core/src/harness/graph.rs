use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::json;

use super::bundle::{num, strictly_decreasing, ResultBundle};
use super::config::{GraphPosterior, GraphPrior};
use super::fem::synthetic_data;
use crate::error::Result;
use crate::fem::CoefficientFn;
use crate::gaussian::{posterior_weighted, GaussianMeasure, ObservationModel};
use crate::graph::{
    build_graph, connectivity_scale, graph_elliptic_operator, surrogate_observation_matrix, CellBasis, GraphOperator, GraphSpectrum,
    PointCloud, SamplingMode,
};
use crate::spectral::{error_metrics, spectral_posterior, Domain, SpectralPosterior, SpectralReference};
use crate::weighted::WeightedVector;

pub(crate) fn prior_mean_circle(s: f64) -> f64 {
    (2.0 * PI * s).cos()
}

/// Cloud, graph and the spectrum of `A = Delta^Theta + B`.
struct GraphLevel {
    cloud: PointCloud,
    graph: GraphOperator,
    spectrum: GraphSpectrum,
}

fn graph_level(
    n: usize,
    sampling: SamplingMode,
    seed: u64,
    c: f64,
    theta: &CoefficientFn,
    b: &CoefficientFn,
) -> Result<GraphLevel> {
    let cloud = PointCloud::new(n, sampling, seed)?;
    let h_n = connectivity_scale(n as f64, 1, c);
    let graph = build_graph(&cloud, h_n, Some(theta))?;
    let a = graph_elliptic_operator(&graph, &cloud, b)?;
    let spectrum = GraphSpectrum::of_operator(&a)?;
    Ok(GraphLevel { cloud, graph, spectrum })
}

/// Largest relative error within each pair of graph eigenvalues that
/// approximates `theta (2 pi k)^2 + b`, for `k = 1..=modes`.
pub fn paired_eigenvalue_errors(eigenvalues: &DVector<f64>, theta: f64, b: f64, modes: usize) -> Vec<f64> {
    (1..=modes)
        .map(|k| {
            let exact = theta * (2.0 * PI * k as f64).powi(2) + b;
            [2 * k - 1, 2 * k]
                .iter()
                .filter_map(|&i| eigenvalues.get(i))
                .map(|l| (l - exact).abs() / exact)
                .fold(f64::NAN, f64::max)
        })
        .collect()
}

struct PriorPoint {
    h_n: f64,
    connected: bool,
    eps_c: f64,
    eig_err: Vec<f64>,
}

pub fn graph_prior(c: &GraphPrior, cutoff: Option<usize>) -> Result<ResultBundle> {
    let (theta, b) = c.theta.constant().zip(c.b.constant()).expect("validated");
    let n_ref = c.n_ref.unwrap_or(4 * c.n_list.iter().max().expect("validated"));
    let reference = SpectralReference::new(Domain::Circle, theta, b, c.alpha, n_ref)?;
    let ref_prior = SpectralPosterior::prior(&reference, DVector::zeros(n_ref))?;
    let cutoff = cutoff.or(c.spectral_cutoff);

    let points: Vec<Result<PriorPoint>> = c
        .n_list
        .par_iter()
        .map(|&n| {
            let lvl = graph_level(n, c.sampling, c.seed, c.connectivity_constant, &c.theta, &c.b)?;
            let c0 = lvl.spectrum.prior_covariance(c.alpha, cutoff)?;
            let prior = GaussianMeasure::new(WeightedVector::zeros(c0.space()), c0)?;
            let m = error_metrics(&prior, &CellBasis::new(lvl.cloud), &reference, &ref_prior)?;
            Ok(PriorPoint {
                h_n: lvl.graph.h_n,
                connected: lvl.graph.is_connected(),
                eps_c: m.eps_c,
                eig_err: paired_eigenvalue_errors(&lvl.spectrum.eigenvalues, theta, b, c.eig_modes),
            })
        })
        .collect();

    let mut out = ResultBundle::new("graph-prior", vec!["n", "h_n", "connected", "eps_C"]);
    let mut eps = Vec::new();
    let mut eig_rows: Vec<Vec<f64>> = Vec::new();
    let mut connected = true;
    let mut complete = true;
    let mut details = Vec::new();
    for (&n, p) in c.n_list.iter().zip(points) {
        match p {
            Ok(p) => {
                out.rows.push(vec![n.to_string(), num(p.h_n), p.connected.to_string(), num(p.eps_c)]);
                connected &= p.connected;
                eps.push(p.eps_c);
                details.push(json!({"n": n, "eigenvalue_rel_errors": p.eig_err}));
                eig_rows.push(p.eig_err);
            }
            Err(err) => {
                out.point_error(format!("n={n}"), err);
                complete = false;
                let h_n = connectivity_scale(n as f64, 1, c.connectivity_constant);
                out.rows.push(vec![n.to_string(), num(h_n), "false".into(), num(f64::NAN)]);
            }
        }
    }
    out.check("all points computed", complete, format!("{} of {}", eps.len(), c.n_list.len()));
    out.check("graphs connected", connected, "one connected component at every n");
    out.check("eps_C strictly decreasing", complete && strictly_decreasing(&eps), format!("{eps:?}"));
    let ratio = eps.last().zip(eps.first()).map(|(l, f)| l / f).unwrap_or(f64::NAN);
    out.check(
        "eps_C decay ratio",
        complete && ratio <= c.max_decay_ratio,
        format!("final/initial = {ratio:.4} (max {})", c.max_decay_ratio),
    );
    for k in 0..c.eig_modes {
        let errs: Vec<f64> = eig_rows.iter().map(|r| r[k]).collect();
        out.check(
            format!("eigenvalue k={} error decreasing", k + 1),
            complete && errs.iter().all(|e| e.is_finite()) && strictly_decreasing(&errs),
            format!("{errs:?}"),
        );
    }
    let ns: Vec<f64> = c.n_list.iter().map(|&n| n as f64).collect();
    let all_eps: Vec<f64> = out.rows.iter().map(|r| r[3].parse().unwrap_or(f64::NAN)).collect();
    out.fit_check("eps_C", &ns, &all_eps, None);
    out.details = json!({ "n_ref": n_ref, "spectral_cutoff": cutoff, "levels": details });
    Ok(out)
}

struct PosteriorPoint {
    h_n: f64,
    connected: bool,
    eps_m: f64,
    eps_c: f64,
    warnings: usize,
}

pub fn graph_posterior(c: &GraphPosterior, cutoff: Option<usize>) -> Result<ResultBundle> {
    let (theta, b) = c.theta.constant().zip(c.b.constant()).expect("validated");
    let n_ref = c.n_ref.unwrap_or(4 * c.n_list.iter().max().expect("validated"));
    let reference = SpectralReference::new(Domain::Circle, theta, b, c.alpha, n_ref)?;
    let forward = reference.forward_matrix(&c.centers, c.delta, true);
    let y = synthetic_data(&reference, &forward, c.gamma, c.seed);
    let gamma = DMatrix::identity(c.centers.len(), c.centers.len()) * c.gamma;
    let ref_post = spectral_posterior(&reference, &reference.project(prior_mean_circle), &forward, &gamma, &y)?;
    let cutoff = cutoff.or(c.spectral_cutoff);

    let points: Vec<Result<PosteriorPoint>> = c
        .n_list
        .par_iter()
        .map(|&n| {
            let lvl = graph_level(n, c.sampling, c.seed, c.connectivity_constant, &c.theta, &c.b)?;
            let space = lvl.cloud.space();
            let c0 = lvl.spectrum.prior_covariance(c.alpha, cutoff)?;
            let m0 = DVector::from_iterator(n, lvl.cloud.positions().iter().map(|&s| prior_mean_circle(s)));
            let prior = GaussianMeasure::new(space.vector(m0)?, c0)?;
            let plain = build_graph(&lvl.cloud, lvl.graph.h_n, None)?;
            let heat = GraphSpectrum::new(&plain.laplacian, &space)?.heat_matrix();
            let (o, warnings) = surrogate_observation_matrix(&lvl.cloud, &c.centers, c.delta)?;
            let obs = ObservationModel::new(o * heat, gamma.clone(), y.clone())?;
            let post = posterior_weighted(&prior, &obs)?;
            let m = error_metrics(&post, &CellBasis::new(lvl.cloud), &reference, &ref_post)?;
            Ok(PosteriorPoint {
                h_n: lvl.graph.h_n,
                connected: lvl.graph.is_connected(),
                eps_m: m.eps_m,
                eps_c: m.eps_c,
                warnings: warnings.len() + lvl.graph.warnings.len(),
            })
        })
        .collect();

    let mut out = ResultBundle::new("graph-posterior", vec!["n", "h_n", "connected", "eps_m", "eps_C"]);
    let (mut em, mut ec) = (Vec::new(), Vec::new());
    let mut warnings = 0;
    for (&n, p) in c.n_list.iter().zip(points) {
        match p {
            Ok(p) => {
                out.rows.push(vec![n.to_string(), num(p.h_n), p.connected.to_string(), num(p.eps_m), num(p.eps_c)]);
                em.push(p.eps_m);
                ec.push(p.eps_c);
                warnings += p.warnings;
            }
            Err(err) => {
                out.point_error(format!("n={n}"), err);
                let h_n = connectivity_scale(n as f64, 1, c.connectivity_constant);
                out.rows.push(vec![n.to_string(), num(h_n), "false".into(), num(f64::NAN), num(f64::NAN)]);
                em.push(f64::NAN);
                ec.push(f64::NAN);
            }
        }
    }
    out.note("eps_m decreasing", strictly_decreasing(&em), format!("{em:?}"));
    out.note("eps_C decreasing", strictly_decreasing(&ec), format!("{ec:?}"));
    let ns: Vec<f64> = c.n_list.iter().map(|&n| n as f64).collect();
    out.fit_check("eps_m", &ns, &em, None);
    out.fit_check("eps_C", &ns, &ec, None);
    out.details = json!({ "n_ref": n_ref, "spectral_cutoff": cutoff, "warnings": warnings });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_errors_take_the_worse_of_each_pair() {
        let exact = |k: f64| (2.0 * PI * k).powi(2) + 1.0;
        let ev = DVector::from_vec(vec![1.0, exact(1.0) * 1.01, exact(1.0) * 0.98, exact(2.0), exact(2.0) * 1.001]);
        let e = paired_eigenvalue_errors(&ev, 1.0, 1.0, 2);
        assert!((e[0] - 0.02).abs() < 1e-12);
        assert!((e[1] - 0.001).abs() < 1e-12);
    }
}
