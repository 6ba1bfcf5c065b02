//! Analytic eigen-expansion reference for constant-coefficient problems on the
//! interval and the circle, and the error metrics that compare a discrete
//! posterior against it.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{prolongation, HatBasis, Mesh1D};
use crate::gaussian::GaussianMeasure;
use crate::graph::CellBasis;
use crate::linalg;
use crate::weighted::{BasisEvaluator, WeightedSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// (0, 1) with Dirichlet conditions, modes `sqrt(2) sin(k pi x)`.
    Interval,
    /// Unit-circumference circle, modes `1, sqrt(2) cos(2 pi k s), sqrt(2) sin(2 pi k s)`.
    Circle,
}

/// Largest allowed ratio of the trailing to the leading prior variance.
pub const TRUNCATION_LIMIT: f64 = 1e-3;

/// First `n_ref` eigenpairs of `A = -theta d^2/dx^2 + b`, in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReference {
    pub domain: Domain,
    pub theta: f64,
    pub b: f64,
    pub alpha: u32,
    pub n_ref: usize,
}

impl SpectralReference {
    pub fn new(domain: Domain, theta: f64, b: f64, alpha: u32, n_ref: usize) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::Coefficient { name: "theta", x: f64::NAN, value: theta });
        }
        let b_ok = match domain {
            Domain::Interval => b >= 0.0,
            Domain::Circle => b > 0.0,
        };
        if !b_ok {
            return Err(Error::Coefficient { name: "b", x: f64::NAN, value: b });
        }
        if alpha == 0 {
            return Err(Error::config("alpha", "alpha must be a positive integer"));
        }
        if n_ref == 0 {
            return Err(Error::config("n_ref", "at least one reference mode is needed"));
        }
        Ok(Self { domain, theta, b, alpha, n_ref })
    }

    /// Frequency `omega_j` of mode `j` (zero-based).
    pub fn frequency(&self, j: usize) -> f64 {
        match self.domain {
            Domain::Interval => (j + 1) as f64 * PI,
            Domain::Circle => 2.0 * PI * j.div_ceil(2) as f64,
        }
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.theta * self.frequency(j).powi(2) + self.b
    }

    pub fn prior_variance(&self, j: usize) -> f64 {
        self.eigenvalue(j).powi(-(self.alpha as i32))
    }

    pub fn prior_variances(&self) -> DVector<f64> {
        DVector::from_fn(self.n_ref, |j, _| self.prior_variance(j))
    }

    /// Factor of mode `j` under the unit-time heat semigroup `e^{t d^2/dx^2}`.
    pub fn heat_factor(&self, j: usize) -> f64 {
        (-self.frequency(j).powi(2)).exp()
    }

    /// `Tr(C0) = sum_j lambda_j^{-alpha}` over retained modes.
    pub fn prior_trace(&self) -> f64 {
        self.prior_variances().sum()
    }

    /// Effective dimension `Tr(C0) / ||C0||` of the retained prior.
    pub fn effective_dimension(&self) -> f64 {
        self.prior_trace() / self.prior_variance(0)
    }

    /// Errors when the trailing prior variance is not negligible against the leading one.
    pub fn check_truncation(&self) -> Result<()> {
        let ratio = self.prior_variance(self.n_ref - 1) / self.prior_variance(0);
        if ratio > TRUNCATION_LIMIT {
            return Err(Error::Truncation { ratio, limit: TRUNCATION_LIMIT });
        }
        Ok(())
    }

    pub fn eval_mode(&self, j: usize, x: f64) -> f64 {
        let w = self.frequency(j);
        match self.domain {
            Domain::Interval => SQRT_2 * (w * x).sin(),
            Domain::Circle if j == 0 => 1.0,
            Domain::Circle if j % 2 == 1 => SQRT_2 * (w * x).cos(),
            Domain::Circle => SQRT_2 * (w * x).sin(),
        }
    }

    /// `int_a^b psi_j`; on the interval the range is clipped to [0, 1].
    pub fn mode_integral(&self, j: usize, a: f64, b: f64) -> f64 {
        let (a, b) = match self.domain {
            Domain::Interval => (a.max(0.0), b.min(1.0)),
            Domain::Circle => (a, b),
        };
        if b <= a {
            return 0.0;
        }
        let w = self.frequency(j);
        match self.domain {
            Domain::Interval => SQRT_2 * ((w * a).cos() - (w * b).cos()) / w,
            Domain::Circle if j == 0 => b - a,
            Domain::Circle if j % 2 == 1 => SQRT_2 * ((w * b).sin() - (w * a).sin()) / w,
            Domain::Circle => SQRT_2 * ((w * a).cos() - (w * b).cos()) / w,
        }
    }

    /// Range `[c - r, c + r]` covered by the ball of radius `delta` about `c`.
    /// On the circle the ball uses chordal distance, so `r = asin(pi delta) / pi`.
    pub fn ball(&self, center: f64, delta: f64) -> (f64, f64) {
        let r = match self.domain {
            Domain::Interval => delta,
            Domain::Circle if PI * delta >= 1.0 => 0.5,
            Domain::Circle => (PI * delta).asin() / PI,
        };
        (center - r, center + r)
    }

    /// Rows are the ball-integral functionals of the modes, optionally after the heat semigroup.
    pub fn forward_matrix(&self, centers: &[f64], delta: f64, heat: bool) -> DMatrix<f64> {
        DMatrix::from_fn(centers.len(), self.n_ref, |k, j| {
            let (a, b) = self.ball(centers[k], delta);
            let v = self.mode_integral(j, a, b);
            if heat {
                v * self.heat_factor(j)
            } else {
                v
            }
        })
    }

    /// Mode coefficients of `f` by Gauss-Legendre quadrature.
    pub fn project(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let panels = self.n_ref.max(16);
        let (gx, gw) = linalg::gauss_legendre(8);
        let width = 1.0 / panels as f64;
        let mut out = DVector::zeros(self.n_ref);
        for p in 0..panels {
            let a = p as f64 * width;
            for (&t, &w) in gx.iter().zip(&gw) {
                let x = a + 0.5 * width * (t + 1.0);
                let fw = f(x) * 0.5 * width * w;
                for j in 0..self.n_ref {
                    out[j] += fw * self.eval_mode(j, x);
                }
            }
        }
        out
    }

    /// Value of `sum_j c_j psi_j(x)`.
    pub fn evaluate(&self, coeffs: &DVector<f64>, x: f64) -> f64 {
        coeffs.iter().enumerate().map(|(j, c)| c * self.eval_mode(j, x)).sum()
    }
}

/// Closed-form `X_{ji} = <psi_j, phi_i>_{L2}` between reference modes and a discrete basis.
pub trait CrossGram: BasisEvaluator {
    fn cross_gram(&self, reference: &SpectralReference) -> Result<DMatrix<f64>>;
}

impl CrossGram for HatBasis {
    fn cross_gram(&self, reference: &SpectralReference) -> Result<DMatrix<f64>> {
        if reference.domain != Domain::Interval {
            return Err(Error::config("domain", "hat functions pair with the interval reference"));
        }
        let mesh = self.mesh();
        let h = mesh.h();
        Ok(DMatrix::from_fn(reference.n_ref, mesh.n_interior(), |j, i| {
            let w = reference.frequency(j);
            let s = (0.5 * w * h).sin();
            SQRT_2 * 4.0 / (w * w * h) * (w * mesh.node(i)).sin() * s * s
        }))
    }
}

impl CrossGram for CellBasis {
    fn cross_gram(&self, reference: &SpectralReference) -> Result<DMatrix<f64>> {
        if reference.domain != Domain::Circle {
            return Err(Error::config("domain", "cell functions pair with the circle reference"));
        }
        let cloud = self.cloud();
        let cells: Vec<(f64, f64)> = (0..cloud.len()).map(|i| cloud.cell(i)).collect();
        Ok(DMatrix::from_fn(reference.n_ref, cloud.len(), |j, i| {
            reference.mode_integral(j, cells[i].0, cells[i].1)
        }))
    }
}

/// The first `n` reference modes used directly as a discrete basis, with `M = I`.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    reference: SpectralReference,
    n: usize,
}

impl ModeBasis {
    pub fn new(reference: SpectralReference, n: usize) -> Self {
        assert!(n >= 1 && n <= reference.n_ref, "mode basis size must lie in 1..=n_ref");
        Self { reference, n }
    }

    pub fn space(&self) -> WeightedSpace {
        WeightedSpace::euclidean(self.n)
    }
}

impl BasisEvaluator for ModeBasis {
    fn dim(&self) -> usize {
        self.n
    }

    fn evaluate(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().enumerate().map(|(j, c)| c * self.reference.eval_mode(j, x)).sum()
    }
}

impl CrossGram for ModeBasis {
    fn cross_gram(&self, reference: &SpectralReference) -> Result<DMatrix<f64>> {
        if reference.domain != self.reference.domain {
            return Err(Error::config("domain", "mode basis and reference domains differ"));
        }
        Ok(DMatrix::from_fn(reference.n_ref, self.n, |j, i| if i == j { 1.0 } else { 0.0 }))
    }
}

/// Reference Gaussian in mode coordinates with covariance `diag(var) - U U^T`.
#[derive(Debug, Clone)]
pub struct SpectralPosterior {
    pub mean: DVector<f64>,
    pub variances: DVector<f64>,
    pub factor: DMatrix<f64>,
}

impl SpectralPosterior {
    pub fn prior(reference: &SpectralReference, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != reference.n_ref {
            return Err(Error::dim("reference prior mean", reference.n_ref, mean.len()));
        }
        Ok(Self {
            mean,
            variances: reference.prior_variances(),
            factor: DMatrix::zeros(reference.n_ref, 0),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_cov(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.variances.component_mul(v);
        if self.factor.ncols() > 0 {
            out -= &self.factor * (self.factor.transpose() * v);
        }
        out
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.variances) - &self.factor * self.factor.transpose()
    }
}

/// Conjugate update of the reference prior `N(m0, diag(lambda^{-alpha}))`.
pub fn spectral_posterior(
    reference: &SpectralReference,
    prior_mean: &DVector<f64>,
    forward: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<SpectralPosterior> {
    let prior = SpectralPosterior::prior(reference, prior_mean.clone())?;
    if forward.ncols() != reference.n_ref {
        return Err(Error::dim("reference forward map", reference.n_ref, forward.ncols()));
    }
    let var = &prior.variances;
    // C F^T with C diagonal
    let mut cft = forward.transpose();
    for (j, mut row) in cft.row_iter_mut().enumerate() {
        row *= var[j];
    }
    let mut s = forward * &cft + gamma;
    linalg::symmetrize(&mut s);
    let chol = linalg::cholesky(&s, "reference innovation covariance")?;
    let mean = prior_mean + &cft * chol.solve(&(y - forward * prior_mean));
    // U = C F^T L^{-T}, so U U^T = C F^T S^{-1} F C
    let ut = chol
        .l()
        .solve_lower_triangular(&cft.transpose())
        .expect("nonzero diagonal");
    Ok(SpectralPosterior {
        mean,
        variances: var.clone(),
        factor: ut.transpose(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub eps_m: f64,
    pub eps_c: f64,
}

/// Mean error in `L2` and covariance error in operator norm, measured on the
/// span of the reference modes.
pub fn error_metrics(
    discrete: &GaussianMeasure,
    basis: &impl CrossGram,
    reference: &SpectralReference,
    posterior: &SpectralPosterior,
) -> Result<ErrorMetrics> {
    reference.check_truncation()?;
    let x = basis.cross_gram(reference)?;
    error_metrics_with_gram(discrete, &x, posterior)
}

/// As [`error_metrics`] with a precomputed cross-Gram matrix.
pub fn error_metrics_with_gram(
    discrete: &GaussianMeasure,
    x: &DMatrix<f64>,
    posterior: &SpectralPosterior,
) -> Result<ErrorMetrics> {
    let space = discrete.space();
    if x.ncols() != space.dim() || x.nrows() != posterior.dim() {
        return Err(Error::dim("cross-Gram matrix", space.dim(), x.ncols()));
    }
    let m = discrete.mean.coeffs();
    let a = &posterior.mean;
    let sq = a.norm_squared() - 2.0 * a.dot(&(x * m)) + space.inner_raw(m, m);
    let eps_m = sq.max(0.0).sqrt();

    let ce = discrete.euclidean_cov();
    let eps_c = linalg::sym_max_abs_eigenvalue(posterior.dim(), |v| {
        posterior.apply_cov(v) - x * (&ce * (x.transpose() * v))
    });
    Ok(ErrorMetrics { eps_m, eps_c })
}

/// Errors of a coarse FEM posterior against a nested fine FEM posterior, for
/// coefficients without a closed-form spectrum.
pub fn fine_grid_error_metrics(
    coarse: &GaussianMeasure,
    coarse_mesh: &Mesh1D,
    fine: &GaussianMeasure,
    fine_mesh: &Mesh1D,
) -> Result<ErrorMetrics> {
    let t = prolongation(coarse_mesh, fine_mesh)?;
    let fine_space: &WeightedSpace = fine.space();
    let diff = &t * coarse.mean.coeffs() - fine.mean.coeffs();
    let eps_m = fine_space.norm_raw(&diff);
    // P_c^* C_c P_c acts on fine functions as T C_c^E T^T M_f; in the frame of
    // M_f = R^T R the difference becomes R (T C_c^E T^T - C_f^E) R^T.
    let e = &t * coarse.euclidean_cov() * t.transpose() - fine.euclidean_cov();
    let re = fine_space.factor_mul(&e);
    let sym = fine_space.factor_mul(&re.transpose());
    let eps_c = linalg::sym_max_abs_eigenvalue(sym.nrows(), |v| &sym * v);
    Ok(ErrorMetrics { eps_m, eps_c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, fem_prior_covariance, Coefficients1D};
    use crate::graph::PointCloud;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_examples() {
        let r = SpectralReference::new(Domain::Interval, 1.0, 0.0, 2, 16).unwrap();
        assert_relative_eq!(r.prior_variance(0), PI.powi(-4), max_relative = 1e-14);
        assert_relative_eq!(r.heat_factor(0), (-PI * PI).exp(), max_relative = 1e-14);
        let (c, d) = (0.3, 0.05);
        for j in 0..5 {
            let k = (j + 1) as f64;
            let want = SQRT_2 / (k * PI) * ((k * PI * (c - d)).cos() - (k * PI * (c + d)).cos());
            assert_relative_eq!(r.mode_integral(j, c - d, c + d), want, epsilon = 1e-15);
            let quad = linalg::integrate(|x| r.eval_mode(j, x), c - d, c + d, 4, 16);
            assert!((quad - want).abs() < 1e-14);
        }
    }

    #[test]
    fn circle_modes() {
        let r = SpectralReference::new(Domain::Circle, 1.0, 1.0, 2, 9).unwrap();
        assert_eq!(r.frequency(0), 0.0);
        assert_eq!(r.frequency(1), 2.0 * PI);
        assert_eq!(r.frequency(2), 2.0 * PI);
        assert_eq!(r.frequency(3), 4.0 * PI);
        assert_relative_eq!(r.eigenvalue(4), (4.0 * PI).powi(2) + 1.0);
        for j in 0..9 {
            for (a, b) in [(0.1, 0.35), (-0.2, 0.05), (0.9, 1.3)] {
                let quad = linalg::integrate(|x| r.eval_mode(j, x), a, b, 8, 16);
                assert!((r.mode_integral(j, a, b) - quad).abs() < 1e-13);
            }
        }
        assert!(SpectralReference::new(Domain::Circle, 1.0, 0.0, 2, 9).is_err());
    }

    #[test]
    fn projection_recovers_modes() {
        let r = SpectralReference::new(Domain::Interval, 1.0, 1.0, 2, 32).unwrap();
        let c = r.project(|x| (PI * x).sin() + 0.5 * (3.0 * PI * x).sin());
        assert_relative_eq!(c[0], 1.0 / SQRT_2, epsilon = 1e-13);
        assert_relative_eq!(c[2], 0.5 / SQRT_2, epsilon = 1e-13);
        assert!(c[1].abs() < 1e-13);
    }

    #[test]
    fn hat_cross_gram_matches_quadrature() {
        let mesh = Mesh1D::with_width(1.0 / 8.0).unwrap();
        let basis = HatBasis::new(mesh);
        let r = SpectralReference::new(Domain::Interval, 1.0, 1.0, 2, 40).unwrap();
        let x = basis.cross_gram(&r).unwrap();
        for j in 0..40 {
            for i in 0..mesh.n_interior() {
                let oracle = linalg::integrate(|t| r.eval_mode(j, t) * basis.hat(i, t), 0.0, 1.0, mesh.cells(), 64);
                assert!((x[(j, i)] - oracle).abs() < 1e-12, "({j},{i})");
            }
        }
    }

    #[test]
    fn cell_cross_gram_matches_quadrature() {
        let cloud = PointCloud::equispaced(12).unwrap();
        let basis = CellBasis::new(cloud.clone());
        let r = SpectralReference::new(Domain::Circle, 1.0, 1.0, 2, 25).unwrap();
        let x = basis.cross_gram(&r).unwrap();
        for j in 0..25 {
            for i in 0..12 {
                let (a, b) = cloud.cell(i);
                let oracle = linalg::integrate(|t| r.eval_mode(j, t), a, b, 1, 64);
                assert!((x[(j, i)] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_is_checked() {
        let short = SpectralReference::new(Domain::Interval, 1.0, 1.0, 1, 2).unwrap();
        assert!(matches!(short.check_truncation(), Err(Error::Truncation { .. })));
        let long = SpectralReference::new(Domain::Interval, 1.0, 1.0, 2, 64).unwrap();
        assert!(long.check_truncation().is_ok());
    }

    #[test]
    fn spectral_posterior_matches_dense_update() {
        let r = SpectralReference::new(Domain::Interval, 1.0, 1.0, 1, 12).unwrap();
        let m0 = r.project(|x| (PI * x).sin());
        let f = r.forward_matrix(&[0.3, 0.6], 0.05, true);
        let gamma = DMatrix::identity(2, 2) * 0.01;
        let y = DVector::from_vec(vec![0.01, -0.02]);
        let post = spectral_posterior(&r, &m0, &f, &gamma, &y).unwrap();
        let c = DMatrix::from_diagonal(&r.prior_variances());
        let s = &f * &c * f.transpose() + &gamma;
        let k = &c * f.transpose() * s.clone().try_inverse().unwrap();
        let mean = &m0 + &k * (&y - &f * &m0);
        let cov = &c - &k * &f * &c;
        assert!((&post.mean - mean).amax() < 1e-13);
        assert!((post.cov_matrix() - cov).amax() < 1e-13);
    }

    #[test]
    fn truncated_reference_has_zero_error() {
        let r = SpectralReference::new(Domain::Interval, 1.0, 1.0, 2, 48).unwrap();
        let m0 = r.project(|x| (PI * x).sin());
        let f = r.forward_matrix(&[0.2, 0.7], 0.05, true);
        let gamma = DMatrix::identity(2, 2) * 0.01;
        let y = DVector::from_vec(vec![0.003, -0.001]);
        let post = spectral_posterior(&r, &m0, &f, &gamma, &y).unwrap();
        let basis = ModeBasis::new(r.clone(), r.n_ref);
        let space = basis.space();
        let discrete = GaussianMeasure::new(
            space.vector(post.mean.clone()).unwrap(),
            space.operator(post.cov_matrix()).unwrap(),
        )
        .unwrap();
        let e = error_metrics(&discrete, &basis, &r, &post).unwrap();
        assert!(e.eps_m <= 1e-9 && e.eps_c <= 1e-12, "{e:?}");
    }

    #[test]
    fn metrics_match_dense_oracle() {
        let r = SpectralReference::new(Domain::Interval, 1.0, 1.0, 2, 96).unwrap();
        let mesh = Mesh1D::with_width(1.0 / 8.0).unwrap();
        let basis = HatBasis::new(mesh);
        let space = assemble_mass(&mesh);
        let c0 = fem_prior_covariance(&mesh, &Coefficients1D::constant(1.0, 1.0, 2).unwrap()).unwrap();
        let m = DVector::from_fn(7, |i, _| (PI * mesh.node(i)).sin());
        let discrete = GaussianMeasure::new(space.vector(m.clone()).unwrap(), c0).unwrap();
        let prior = SpectralPosterior::prior(&r, r.project(|x| (PI * x).sin())).unwrap();
        let e = error_metrics(&discrete, &basis, &r, &prior).unwrap();

        // mean: direct quadrature of (m_ref - P* m)^2
        let hb = HatBasis::new(mesh);
        let sq = linalg::integrate(
            |x| (r.evaluate(&prior.mean, x) - hb.evaluate(m.as_slice(), x)).powi(2),
            0.0,
            1.0,
            mesh.cells() * 4,
            16,
        );
        assert_relative_eq!(e.eps_m, sq.sqrt(), max_relative = 1e-6);

        // covariance: dense mixed-basis difference
        let x = basis.cross_gram(&r).unwrap();
        let d = prior.cov_matrix() - &x * discrete.euclidean_cov() * x.transpose();
        let want = linalg::sym_eigenvalues(&d).into_iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert_relative_eq!(e.eps_c, want, max_relative = 1e-10);
    }

    #[test]
    fn fine_grid_reference_vanishes_on_identical_meshes() {
        let mesh = Mesh1D::with_width(1.0 / 8.0).unwrap();
        let space = assemble_mass(&mesh);
        let c0 = fem_prior_covariance(&mesh, &Coefficients1D::constant(1.0, 1.0, 2).unwrap()).unwrap();
        let m = DVector::from_fn(7, |i, _| i as f64);
        let g = GaussianMeasure::new(space.vector(m).unwrap(), c0).unwrap();
        let e = fine_grid_error_metrics(&g, &mesh, &g, &mesh).unwrap();
        assert!(e.eps_m < 1e-14 && e.eps_c < 1e-14);
    }
}
