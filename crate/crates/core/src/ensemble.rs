//! Monte Carlo prior sampling and the perturbed-observation ensemble Kalman update.
//!
//! Every member `j` draws from its own ChaCha stream `(seed, j)`, so results do
//! not depend on how members are scheduled across threads.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::ObservationModel;
use crate::linalg;
use crate::weighted::{operator_norm_m, weighted_trace, WeightedOperator, WeightedSpace, WeightedVector};

/// `L` with `C0 = L L^T M`.
#[derive(Debug, Clone)]
pub struct PriorFactor {
    pub l: DMatrix<f64>,
    space: WeightedSpace,
}

impl PriorFactor {
    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    /// `L L^T M`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.space.mass_mul_mat(&(&self.l * self.l.transpose())).transpose()
    }
}

/// Factors `C0^E = C0 M^{-1}` by Cholesky, falling back to the symmetric square
/// root when the Cholesky factor is not accurate enough.
pub fn factor_prior(c0: &WeightedOperator) -> Result<PriorFactor> {
    let space = c0.space().clone();
    let mut ce = c0.euclidean_form();
    linalg::symmetrize(&mut ce);
    let scale = c0.matrix().norm();
    let accurate = |l: &DMatrix<f64>| {
        let rebuilt = space.mass_mul_mat(&(l * l.transpose())).transpose();
        (rebuilt - c0.matrix()).norm() <= 1e-8 * scale
    };
    if let Some(chol) = Cholesky::new(ce.clone()) {
        let l = chol.l();
        if accurate(&l) {
            return Ok(PriorFactor { l, space });
        }
    }
    let min_eigenvalue = linalg::sym_eigenvalues(&ce)[0];
    if min_eigenvalue < -1e-10 {
        return Err(Error::Factor { min_eigenvalue });
    }
    let l = linalg::sym_sqrt(&ce);
    if !accurate(&l) {
        return Err(Error::Factor { min_eigenvalue });
    }
    Ok(PriorFactor { l, space })
}

/// Members stored as the columns of an `n x J` matrix.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: DMatrix<f64>,
    space: WeightedSpace,
    pub seed: u64,
}

impl Ensemble {
    pub fn new(members: DMatrix<f64>, space: WeightedSpace, seed: u64) -> Result<Self> {
        if members.nrows() != space.dim() {
            return Err(Error::dim("ensemble members", space.dim(), members.nrows()));
        }
        if members.ncols() < 2 {
            return Err(Error::EnsembleSize(members.ncols()));
        }
        Ok(Self { members, space, seed })
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    pub fn mean(&self) -> DVector<f64> {
        self.members.column_mean()
    }

    /// Deviations from the ensemble mean, one column per member.
    pub fn anomalies(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut a = self.members.clone();
        for mut col in a.column_iter_mut() {
            col -= &mean;
        }
        a
    }
}

fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng
}

/// `dim x J` standard normals, column `j` from stream `(seed, j)`.
pub fn standard_normals(dim: usize, members: usize, seed: u64) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..members)
        .into_par_iter()
        .map(|j| {
            let mut rng = member_rng(seed, j);
            DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng))
        })
        .collect();
    DMatrix::from_columns(&cols)
}

/// `u_j = m0 + L xi_j` for given standard-normal columns `xi`.
pub fn sample_prior_with(factor: &PriorFactor, m0: &WeightedVector, xi: &DMatrix<f64>, seed: u64) -> Result<Ensemble> {
    factor.space.check(m0.space(), "prior sampling")?;
    let mut members = &factor.l * xi;
    for mut col in members.column_iter_mut() {
        col += m0.coeffs();
    }
    Ensemble::new(members, factor.space.clone(), seed)
}

pub fn sample_prior(factor: &PriorFactor, m0: &WeightedVector, members: usize, seed: u64) -> Result<Ensemble> {
    if members < 2 {
        return Err(Error::EnsembleSize(members));
    }
    let xi = standard_normals(factor.space.dim(), members, seed);
    sample_prior_with(factor, m0, &xi, seed)
}

#[derive(Debug, Clone)]
pub struct SampleStats {
    pub mean: WeightedVector,
    pub cov: WeightedOperator,
}

/// Sample mean and `C = (1/(J-1)) sum (u - m)(u - m)^T M`.
pub fn weighted_sample_stats(ens: &Ensemble) -> Result<SampleStats> {
    let j = ens.size();
    if j < 2 {
        return Err(Error::EnsembleSize(j));
    }
    let a = ens.anomalies();
    let mut ce = &a * a.transpose() / (j - 1) as f64;
    linalg::symmetrize(&mut ce);
    let cov = ens.space.mass_mul_mat(&ce).transpose();
    Ok(SampleStats {
        mean: ens.space.vector(ens.mean())?,
        cov: ens.space.operator(cov)?,
    })
}

/// Observation perturbations `eta_j ~ N(0, Gamma)`, column `j` from stream `(seed, j)`.
pub fn observation_noise(gamma: &DMatrix<f64>, members: usize, seed: u64) -> Result<DMatrix<f64>> {
    let chol = linalg::cholesky(gamma, "noise covariance")?;
    Ok(chol.l() * standard_normals(gamma.nrows(), members, seed))
}

/// Perturbed-observation update with the given perturbations (`None` means `eta = 0`).
///
/// The sample covariance is never formed: `F C F^nat = (F A)(F A)^T / (J-1)` and
/// `C F^nat = A (F A)^T / (J-1)` with `A` the anomaly matrix.
pub fn eki_update_with_noise(ens: &Ensemble, obs: &ObservationModel, noise: Option<&DMatrix<f64>>) -> Result<Ensemble> {
    let j = ens.size();
    if obs.forward.ncols() != ens.space.dim() {
        return Err(Error::dim("forward map columns", ens.space.dim(), obs.forward.ncols()));
    }
    let a = ens.anomalies();
    let fa = &obs.forward * &a;
    let scale = 1.0 / (j - 1) as f64;
    let mut s = &fa * fa.transpose() * scale + &obs.gamma;
    linalg::symmetrize(&mut s);
    let chol = linalg::cholesky(&s, "ensemble innovation covariance")?;

    let mut innovation = -(&obs.forward * &ens.members);
    for mut col in innovation.column_iter_mut() {
        col += &obs.y;
    }
    if let Some(eta) = noise {
        if eta.shape() != innovation.shape() {
            return Err(Error::dim("observation perturbations", innovation.len(), eta.len()));
        }
        innovation += eta;
    }
    let weights = chol.solve(&innovation);
    let members = &ens.members + &a * (fa.transpose() * weights) * scale;
    Ensemble::new(members, ens.space.clone(), ens.seed)
}

/// Perturbed-observation ensemble Kalman update with seeded `eta_j ~ N(0, Gamma)`.
pub fn eki_update(ens: &Ensemble, obs: &ObservationModel, seed: u64) -> Result<Ensemble> {
    let eta = observation_noise(&obs.gamma, ens.size(), seed)?;
    eki_update_with_noise(ens, obs, Some(&eta))
}

/// `r_M(C) = Tr(C) / ||C||`.
pub fn effective_dimension(c: &WeightedOperator) -> Result<f64> {
    let norm = operator_norm_m(c);
    if !(norm > 0.0) {
        return Err(Error::Degenerate("effective dimension of the zero operator"));
    }
    Ok(weighted_trace(c) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{fem_prior_covariance, Coefficients1D, Mesh1D};
    use crate::gaussian::{posterior_weighted, GaussianMeasure};
    use approx::assert_relative_eq;

    fn fem_prior(h: f64, alpha: u32) -> WeightedOperator {
        let mesh = Mesh1D::with_width(h).unwrap();
        fem_prior_covariance(&mesh, &Coefficients1D::constant(1.0, 1.0, alpha).unwrap()).unwrap()
    }

    #[test]
    fn factor_examples() {
        let id = WeightedSpace::euclidean(3);
        let f = factor_prior(&WeightedOperator::identity(&id)).unwrap();
        assert!((&f.l - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);

        let four = WeightedSpace::new(DMatrix::identity(2, 2) * 4.0).unwrap();
        let f = factor_prior(&WeightedOperator::identity(&four)).unwrap();
        assert!((&f.l * f.l.transpose() - DMatrix::<f64>::identity(2, 2) * 0.25).amax() < 1e-15);

        let c0 = fem_prior(0.125, 2);
        let f = factor_prior(&c0).unwrap();
        assert!((f.reconstruct() - c0.matrix()).norm() <= 1e-8 * c0.matrix().norm());
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let s = WeightedSpace::euclidean(2);
        let c = s.operator(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))).unwrap();
        assert!(matches!(factor_prior(&c), Err(Error::Factor { .. })));
    }

    #[test]
    fn rank_deficient_covariance_uses_square_root() {
        let s = WeightedSpace::euclidean(3);
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let c = s.operator(&v * v.transpose()).unwrap();
        let f = factor_prior(&c).unwrap();
        assert!((f.reconstruct() - c.matrix()).norm() <= 1e-8 * c.matrix().norm());
    }

    #[test]
    fn zero_noise_sampling_returns_the_mean() {
        let c0 = fem_prior(0.125, 2);
        let f = factor_prior(&c0).unwrap();
        let m0 = c0.space().vector(DVector::from_element(7, 0.3)).unwrap();
        let ens = sample_prior_with(&f, &m0, &DMatrix::zeros(7, 5), 0).unwrap();
        for col in ens.members.column_iter() {
            assert_eq!(col, *m0.coeffs());
        }
    }

    #[test]
    fn sampling_statistics_converge() {
        let c0 = fem_prior(1.0 / 9.0, 1);
        assert_eq!(c0.space().dim(), 8);
        let f = factor_prior(&c0).unwrap();
        let m0 = c0.space().vector(DVector::from_element(8, 1.0)).unwrap();
        let ens = sample_prior(&f, &m0, 10_000, 5).unwrap();
        let stats = weighted_sample_stats(&ens).unwrap();
        let err = c0.space().norm_raw(&(stats.mean.coeffs() - m0.coeffs()));
        assert!(err <= 4.0 * (weighted_trace(&c0) / 1e4).sqrt());
        let rel = (stats.cov.matrix() - c0.matrix()).norm() / c0.matrix().norm();
        assert!(rel <= 0.1, "relative covariance error {rel}");
    }

    #[test]
    fn sampling_is_deterministic_and_order_free() {
        let c0 = fem_prior(0.125, 2);
        let f = factor_prior(&c0).unwrap();
        let m0 = WeightedVector::zeros(c0.space());
        let a = sample_prior(&f, &m0, 50, 17).unwrap();
        let b = sample_prior(&f, &m0, 50, 17).unwrap();
        assert_eq!(a.members, b.members);
        // member j does not depend on J
        let c = sample_prior(&f, &m0, 20, 17).unwrap();
        assert_eq!(a.members.columns(0, 20), c.members);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| sample_prior(&f, &m0, 50, 17).unwrap());
        assert_eq!(serial.members, a.members);
    }

    #[test]
    fn sample_stats_examples() {
        let s = WeightedSpace::euclidean(3);
        let same = Ensemble::new(DMatrix::from_element(3, 4, 2.0), s.clone(), 0).unwrap();
        assert_eq!(weighted_sample_stats(&same).unwrap().cov.matrix().norm(), 0.0);

        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let pair = Ensemble::new(DMatrix::from_columns(&[u.clone(), -u.clone()]), s, 0).unwrap();
        let stats = weighted_sample_stats(&pair).unwrap();
        assert!((stats.cov.matrix() - &u * u.transpose() * 2.0).amax() < 1e-15);
        assert!(Ensemble::new(DMatrix::zeros(3, 1), WeightedSpace::euclidean(3), 0).is_err());

        let c0 = fem_prior(0.125, 1);
        let ens = sample_prior(&factor_prior(&c0).unwrap(), &WeightedVector::zeros(c0.space()), 6, 1).unwrap();
        let stats = weighted_sample_stats(&ens).unwrap();
        assert!(stats.cov.self_adjoint_residual() < 1e-10);
        let rank = linalg::sym_eigenvalues(&stats.cov.euclidean_form())
            .iter()
            .filter(|&&v| v > 1e-12)
            .count();
        assert!(rank <= 5);
    }

    #[test]
    fn identical_members_are_not_moved() {
        let s = WeightedSpace::euclidean(2);
        let ens = Ensemble::new(DMatrix::from_element(2, 3, 1.5), s, 0).unwrap();
        let obs = ObservationModel::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let out = eki_update_with_noise(&ens, &obs, None).unwrap();
        assert_eq!(out.members, ens.members);
    }

    #[test]
    fn scalar_update_by_hand() {
        let s = WeightedSpace::euclidean(1);
        let ens = Ensemble::new(DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]), s, 0).unwrap();
        let obs = ObservationModel::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let out = eki_update_with_noise(&ens, &obs, None).unwrap();
        assert_relative_eq!(out.members[(0, 0)], -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(out.members[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn update_matches_posterior_mean_with_exact_covariance() {
        // anomalies A with A A^T / (J-1) = C0^E reproduce the exact gain
        let c0 = fem_prior(0.125, 1);
        let space = c0.space().clone();
        let n = space.dim();
        let f = factor_prior(&c0).unwrap();
        let j = n + 1;
        // zero-mean columns spanning L: A = sqrt(J-1) L Q with Q having orthonormal zero-sum rows
        let mut q = DMatrix::zeros(n, j);
        for r in 0..n {
            // Helmert rows
            let k = r + 1;
            let norm = ((k * (k + 1)) as f64).sqrt();
            for c in 0..k {
                q[(r, c)] = 1.0 / norm;
            }
            q[(r, k)] = -(k as f64) / norm;
        }
        let m0 = DVector::from_fn(n, |i, _| (i as f64).sin());
        let mut members = &f.l * q * ((j - 1) as f64).sqrt();
        for mut col in members.column_iter_mut() {
            col += &m0;
        }
        let ens = Ensemble::new(members, space.clone(), 0).unwrap();
        let stats = weighted_sample_stats(&ens).unwrap();
        assert!((stats.cov.matrix() - c0.matrix()).amax() < 1e-12);

        let fwd = DMatrix::from_fn(2, n, |r, c| ((r + 1) * (c + 2)) as f64 * 0.1);
        let obs = ObservationModel::new(fwd, DMatrix::identity(2, 2) * 0.1, DVector::from_vec(vec![0.5, -0.2])).unwrap();
        let out = eki_update_with_noise(&ens, &obs, None).unwrap();
        let prior = GaussianMeasure::new(space.vector(m0).unwrap(), c0).unwrap();
        let post = posterior_weighted(&prior, &obs).unwrap();
        assert!((out.mean() - post.mean.coeffs()).amax() < 1e-12);
    }

    #[test]
    fn effective_dimension_examples() {
        let s = WeightedSpace::euclidean(4);
        assert_relative_eq!(effective_dimension(&WeightedOperator::identity(&s)).unwrap(), 4.0, epsilon = 1e-12);
        let d = WeightedSpace::euclidean(2)
            .operator(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])))
            .unwrap();
        assert_relative_eq!(effective_dimension(&d).unwrap(), 1.25, epsilon = 1e-12);
        let z = s.operator(DMatrix::zeros(4, 4)).unwrap();
        assert!(matches!(effective_dimension(&z), Err(Error::Degenerate(_))));
    }
}
