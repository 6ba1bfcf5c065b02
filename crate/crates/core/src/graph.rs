//! Graph-Laplacian discretization on the circle of unit circumference.
//!
//! Points carry an arclength coordinate `s in [0, 1)` and are embedded in the
//! plane on the circle of radius `1/(2 pi)`, so chordal distances drive the
//! epsilon-graph.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::fem::CoefficientFn;
use crate::linalg;
use crate::weighted::{BasisEvaluator, WeightedOperator, WeightedSpace, WeightedVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    UniformRandom,
    Equispaced,
}

/// Chordal distance between arclength positions on the unit-circumference circle.
pub fn chord(s: f64, t: f64) -> f64 {
    let d = (s - t).rem_euclid(1.0);
    (PI * d).sin().abs() / PI
}

/// Points on the circle, sorted by arclength.
#[derive(Debug, Clone)]
pub struct PointCloud {
    positions: Vec<f64>,
    mode: SamplingMode,
    seed: u64,
}

impl PointCloud {
    pub fn new(n: usize, mode: SamplingMode, seed: u64) -> Result<Self> {
        if n < 3 {
            return Err(Error::config("n", "point cloud needs at least 3 points"));
        }
        let mut positions: Vec<f64> = match mode {
            SamplingMode::Equispaced => (0..n).map(|i| i as f64 / n as f64).collect(),
            SamplingMode::UniformRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| rng.random::<f64>()).collect()
            }
        };
        positions.sort_by(f64::total_cmp);
        Ok(Self { positions, mode, seed })
    }

    pub fn equispaced(n: usize) -> Result<Self> {
        Self::new(n, SamplingMode::Equispaced, 0)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ambient(&self, i: usize) -> [f64; 2] {
        let a = 2.0 * PI * self.positions[i];
        [a.cos() / (2.0 * PI), a.sin() / (2.0 * PI)]
    }

    /// `M = I / n`.
    pub fn space(&self) -> WeightedSpace {
        WeightedSpace::scaled_identity(self.len(), 1.0 / self.len() as f64)
    }

    /// Arc `[a, a + 1/n)` of the cell attached to point `i`.
    ///
    /// Cells have equal length `1/n` and follow the sorted order of the points,
    /// shifted by the mean offset of the cloud from the equispaced lattice. For
    /// an equispaced cloud each point sits at the centre of its cell.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let n = self.len() as f64;
        let offset = self
            .positions
            .iter()
            .enumerate()
            .map(|(k, s)| s - k as f64 / n)
            .sum::<f64>()
            / n;
        let start = i as f64 / n + offset - 0.5 / n;
        (start, start + 1.0 / n)
    }
}

/// Epsilon-graph with the Laplacian `D - W`.
#[derive(Debug, Clone)]
pub struct GraphOperator {
    pub weights: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub h_n: f64,
    pub components: usize,
    pub warnings: Vec<Warning>,
}

impl GraphOperator {
    pub fn is_connected(&self) -> bool {
        self.components == 1
    }
}

/// Normalization `2 (d + 2) / (n nu_d h^{d+2})` with `d = 1`, `nu_1 = 2`.
pub fn weight_scale(n: usize, h: f64) -> f64 {
    6.0 / (n as f64 * 2.0 * h.powi(3))
}

/// Builds the weights `W_ij = scale * 1{|x_i - x_j| < h}`, optionally
/// reweighted by `sqrt(Theta(x_i) Theta(x_j))`.
pub fn build_graph(cloud: &PointCloud, h_n: f64, theta: Option<&CoefficientFn>) -> Result<GraphOperator> {
    if !(h_n > 0.0) {
        return Err(Error::config("h_n", "connectivity must be positive"));
    }
    let n = cloud.len();
    let s = cloud.positions();
    let scale = weight_scale(n, h_n);
    let root_theta: Vec<f64> = match theta {
        None => vec![1.0; n],
        Some(f) => s
            .iter()
            .map(|&x| {
                let v = f.eval(x);
                if v > 0.0 {
                    Ok(v.sqrt())
                } else {
                    Err(Error::Coefficient { name: "theta", x, value: v })
                }
            })
            .collect::<Result<_>>()?,
    };
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if chord(s[i], s[j]) < h_n {
                let v = scale * root_theta[i] * root_theta[j];
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    let mut lap = -w.clone();
    for i in 0..n {
        lap[(i, i)] = w.row(i).sum();
    }
    let components = count_components(&w);
    let warnings = if components > 1 {
        vec![Warning::DisconnectedGraph { components }]
    } else {
        Vec::new()
    };
    Ok(GraphOperator {
        weights: w,
        laplacian: lap,
        h_n,
        components,
        warnings,
    })
}

fn count_components(w: &DMatrix<f64>) -> usize {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        count += 1;
        seen[root] = true;
        stack.push(root);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && w[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// `A = Delta^Theta + B_n` with `B_n = diag(b(x_i))`, on `R^n_M` with `M = I/n`.
pub fn graph_elliptic_operator(graph: &GraphOperator, cloud: &PointCloud, b: &CoefficientFn) -> Result<WeightedOperator> {
    let mut a = graph.laplacian.clone();
    for (i, &x) in cloud.positions().iter().enumerate() {
        let v = b.eval(x);
        if !(v > 0.0) {
            return Err(Error::Coefficient { name: "b", x, value: v });
        }
        a[(i, i)] += v;
    }
    cloud.space().operator(a)
}

/// Eigenpairs of a symmetric graph operator with `M`-orthonormal eigenvectors,
/// `(1/n) psi^T psi = I`.
#[derive(Debug, Clone)]
pub struct GraphSpectrum {
    pub eigenvalues: DVector<f64>,
    /// Columns are Euclidean-orthonormal; `psi = sqrt(n) * column`.
    unit_vectors: DMatrix<f64>,
    space: WeightedSpace,
}

impl GraphSpectrum {
    /// Requires a symmetric matrix on `M = I/n`, such as `D - W` or `A`.
    pub fn new(matrix: &DMatrix<f64>, space: &WeightedSpace) -> Result<Self> {
        if space.scalar_mass().is_none() {
            return Err(Error::Degenerate("graph spectrum needs a scaled-identity mass"));
        }
        if matrix.nrows() != space.dim() {
            return Err(Error::dim("graph spectrum", space.dim(), matrix.nrows()));
        }
        let (eigenvalues, unit_vectors) = linalg::sym_eigen_sorted(matrix);
        Ok(Self {
            eigenvalues,
            unit_vectors,
            space: space.clone(),
        })
    }

    pub fn of_operator(op: &WeightedOperator) -> Result<Self> {
        Self::new(op.matrix(), op.space())
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    /// `psi^{(k)}`, normalized in `R^n_M`.
    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        let n = self.space.dim() as f64;
        self.unit_vectors.column(k) * n.sqrt()
    }

    /// Same eigenvectors with every eigenvalue shifted by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            eigenvalues: self.eigenvalues.add_scalar(shift),
            unit_vectors: self.unit_vectors.clone(),
            space: self.space.clone(),
        }
    }

    /// `sum_k f(lambda_k) psi_k (x)_M psi_k`, keeping the first `cutoff` modes if given.
    pub fn function(&self, f: impl Fn(f64) -> f64, cutoff: Option<usize>) -> DMatrix<f64> {
        let keep = cutoff.unwrap_or(self.len()).min(self.len());
        let v = self.unit_vectors.columns(0, keep);
        let mut scaled = v.into_owned();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[k]);
        }
        // psi psi^T M = (sqrt(n) v)(sqrt(n) v)^T / n = v v^T
        scaled * v.transpose()
    }

    /// Matérn covariance `A^{-alpha}` from the spectrum of `A`.
    pub fn prior_covariance(&self, alpha: u32, cutoff: Option<usize>) -> Result<WeightedOperator> {
        if alpha == 0 {
            return Err(Error::config("alpha", "alpha must be a positive integer"));
        }
        let min = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min >= 1e-12) {
            return Err(Error::Conditioning {
                context: "graph elliptic operator has a near-zero eigenvalue",
                condition: f64::INFINITY,
            });
        }
        let c = self.function(|l| l.powi(-(alpha as i32)), cutoff);
        self.space.operator(c)
    }

    /// Heat semigroup at unit time, `sum_k e^{-lambda_k} psi_k (x)_M psi_k`.
    pub fn heat_matrix(&self) -> DMatrix<f64> {
        self.function(|l| (-l).exp(), None)
    }
}

/// `C0 = A^{-alpha}` by spectral decomposition.
pub fn graph_prior_covariance(a: &WeightedOperator, alpha: u32) -> Result<WeightedOperator> {
    GraphSpectrum::of_operator(a)?.prior_covariance(alpha, None)
}

/// Applies the heat semigroup of the spectrum (of the unweighted Laplacian) to `u`.
pub fn graph_heat(spectrum: &GraphSpectrum, u: &WeightedVector) -> Result<WeightedVector> {
    spectrum.space.check(u.space(), "graph heat")?;
    let v = &spectrum.unit_vectors;
    let mut c = v.transpose() * u.coeffs();
    for (k, x) in c.iter_mut().enumerate() {
        *x *= (-spectrum.eigenvalues[k]).exp();
    }
    u.space().vector(v * c)
}

/// Row `j` averages (with weight `1/n`) the points within chordal distance
/// `delta` of the centre at arclength `centers[j]`.
pub fn surrogate_observation_matrix(
    cloud: &PointCloud,
    centers: &[f64],
    delta: f64,
) -> Result<(DMatrix<f64>, Vec<Warning>)> {
    if !(delta > 0.0) {
        return Err(Error::config("delta", "delta must be positive"));
    }
    let n = cloud.len();
    let mut o = DMatrix::zeros(centers.len(), n);
    let mut warnings = Vec::new();
    for (j, &c) in centers.iter().enumerate() {
        let mut hits = 0;
        for (i, &s) in cloud.positions().iter().enumerate() {
            if chord(s, c) < delta {
                o[(j, i)] = 1.0 / n as f64;
                hits += 1;
            }
        }
        if hits == 0 {
            warnings.push(Warning::EmptyBall { center: j });
        }
    }
    Ok((o, warnings))
}

pub fn surrogate_observe(
    cloud: &PointCloud,
    v: &WeightedVector,
    centers: &[f64],
    delta: f64,
) -> Result<(DVector<f64>, Vec<Warning>)> {
    if v.coeffs().len() != cloud.len() {
        return Err(Error::dim("surrogate observation", cloud.len(), v.coeffs().len()));
    }
    let (o, warnings) = surrogate_observation_matrix(cloud, centers, delta)?;
    Ok((o * v.coeffs(), warnings))
}

/// `h_n = c sqrt((log n)^{1/d} / n^{1/d})`.
pub fn connectivity_scale(n: f64, d: u32, c: f64) -> f64 {
    let inv_d = 1.0 / d as f64;
    c * (n.ln().powf(inv_d) / n.powf(inv_d)).sqrt()
}

/// Piecewise-constant extension over the cells of a point cloud.
#[derive(Debug, Clone)]
pub struct CellBasis {
    cloud: PointCloud,
}

impl CellBasis {
    pub fn new(cloud: PointCloud) -> Self {
        Self { cloud }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }
}

impl BasisEvaluator for CellBasis {
    fn dim(&self) -> usize {
        self.cloud.len()
    }

    fn evaluate(&self, coeffs: &[f64], x: f64) -> f64 {
        let n = self.cloud.len();
        let (start, _) = self.cloud.cell(0);
        let rel = (x - start).rem_euclid(1.0);
        let i = ((rel * n as f64).floor() as usize).min(n - 1);
        coeffs[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_graph(n: usize, h: f64) -> (PointCloud, GraphOperator) {
        let cloud = PointCloud::equispaced(n).unwrap();
        let g = build_graph(&cloud, h, None).unwrap();
        (cloud, g)
    }

    #[test]
    fn ambient_points_lie_on_the_circle() {
        let cloud = PointCloud::new(50, SamplingMode::UniformRandom, 3).unwrap();
        for i in 0..cloud.len() {
            let [x, y] = cloud.ambient(i);
            assert_relative_eq!((x * x + y * y).sqrt(), 1.0 / (2.0 * PI), epsilon = 1e-15);
        }
        let j = 7;
        let [x0, y0] = cloud.ambient(0);
        let [x1, y1] = cloud.ambient(j);
        let euclid = ((x0 - x1).powi(2) + (y0 - y1).powi(2)).sqrt();
        assert_relative_eq!(euclid, chord(cloud.positions()[0], cloud.positions()[j]), epsilon = 1e-15);
        assert_eq!(cloud.space().scalar_mass(), Some(1.0 / 50.0));
    }

    #[test]
    fn random_clouds_are_seeded() {
        let a = PointCloud::new(20, SamplingMode::UniformRandom, 9).unwrap();
        let b = PointCloud::new(20, SamplingMode::UniformRandom, 9).unwrap();
        let c = PointCloud::new(20, SamplingMode::UniformRandom, 10).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn weight_value_example() {
        assert_relative_eq!(weight_scale(10, 0.5), 2.4, epsilon = 1e-14);
        let (_, g) = unit_graph(10, 0.5);
        // neighbours at arclength 0.1 have chord sin(0.1 pi)/pi < 0.5
        assert_relative_eq!(g.weights[(0, 1)], 2.4, epsilon = 1e-14);
    }

    #[test]
    fn laplacian_structure() {
        let (_, g) = unit_graph(40, 0.2);
        let ones = DVector::from_element(40, 1.0);
        assert!((&g.laplacian * &ones).amax() < 1e-10);
        assert_eq!(g.weights, g.weights.transpose());
        for i in 0..40 {
            assert_eq!(g.weights[(i, i)], 0.0);
        }
        let ev = linalg::sym_eigenvalues(&g.laplacian);
        assert!(ev[0] > -1e-9);
        assert!(ev[1] > 1e-6);
        assert!(g.is_connected());
    }

    #[test]
    fn unit_theta_leaves_weights_unchanged() {
        let cloud = PointCloud::equispaced(30).unwrap();
        let plain = build_graph(&cloud, 0.2, None).unwrap();
        let unit = build_graph(&cloud, 0.2, Some(&CoefficientFn::Const(1.0))).unwrap();
        assert_eq!(plain.weights, unit.weights);
    }

    #[test]
    fn tiny_connectivity_warns() {
        let (_, g) = unit_graph(20, 0.01);
        assert_eq!(g.components, 20);
        assert_eq!(g.warnings, vec![Warning::DisconnectedGraph { components: 20 }]);
    }

    #[test]
    fn elliptic_operator_examples() {
        let (cloud, g) = unit_graph(60, 0.15);
        let a = graph_elliptic_operator(&g, &cloud, &CoefficientFn::Const(1.0)).unwrap();
        let ones = DVector::from_element(60, 1.0);
        assert!((a.matrix() * &ones - &ones).amax() < 1e-10);
        let shifted = linalg::sym_eigenvalues(a.matrix());
        let lap = linalg::sym_eigenvalues(&g.laplacian);
        for (x, y) in shifted.iter().zip(&lap) {
            assert!((x - y - 1.0).abs() < 1e-9);
        }
        let half = graph_elliptic_operator(&g, &cloud, &CoefficientFn::Const(0.5)).unwrap();
        assert!(linalg::sym_eigenvalues(half.matrix())[0] >= 0.5 - 1e-10);
        assert!(half.self_adjoint_residual() < 1e-12);
        assert!(matches!(
            graph_elliptic_operator(&g, &cloud, &CoefficientFn::Const(0.0)),
            Err(Error::Coefficient { name: "b", .. })
        ));
    }

    #[test]
    fn prior_covariance_examples() {
        let (cloud, g) = unit_graph(50, 0.2);
        let a = graph_elliptic_operator(&g, &cloud, &CoefficientFn::Const(1.0)).unwrap();
        let c1 = graph_prior_covariance(&a, 1).unwrap();
        let n = 50;
        assert!((c1.matrix() * a.matrix() - DMatrix::identity(n, n)).amax() < 1e-9);
        let ones = DVector::from_element(n, 1.0);
        for alpha in 1..=3 {
            let c = graph_prior_covariance(&a, alpha).unwrap();
            assert!((c.matrix() * &ones - &ones).amax() < 1e-9);
        }
        let c2 = graph_prior_covariance(&a, 2).unwrap();
        let inv = a.matrix().clone().try_inverse().unwrap();
        assert!((c2.matrix() - &inv * &inv).amax() < 1e-9);
        assert!((c2.matrix() * a.matrix() - a.matrix() * c2.matrix()).norm() < 1e-8);
        assert!(c2.self_adjoint_residual() < 1e-9);

        let singular = cloud.space().operator(g.laplacian.clone()).unwrap();
        assert!(matches!(graph_prior_covariance(&singular, 1), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn spectrum_is_m_orthonormal() {
        let (cloud, g) = unit_graph(40, 0.2);
        let spec = GraphSpectrum::new(&g.laplacian, &cloud.space()).unwrap();
        let n = 40.0;
        let mut gram = DMatrix::zeros(40, 40);
        for i in 0..40 {
            for j in 0..40 {
                gram[(i, j)] = spec.eigenvector(i).dot(&spec.eigenvector(j)) / n;
            }
        }
        assert!((gram - DMatrix::identity(40, 40)).amax() < 1e-9);
        assert!(spec.eigenvalues[0] > -1e-9);
    }

    #[test]
    fn heat_examples() {
        let (cloud, g) = unit_graph(40, 0.2);
        let space = cloud.space();
        let spec = GraphSpectrum::new(&g.laplacian, &space).unwrap();
        let ones = space.vector(DVector::from_element(40, 1.0)).unwrap();
        let out = graph_heat(&spec, &ones).unwrap();
        assert!((out.coeffs() - ones.coeffs()).amax() < 1e-10);
        let zero = WeightedVector::zeros(&space);
        assert_eq!(graph_heat(&spec, &zero).unwrap().coeffs().norm(), 0.0);
        let k = 5;
        let psi = space.vector(spec.eigenvector(k)).unwrap();
        let out = graph_heat(&spec, &psi).unwrap();
        let want = psi.coeffs() * (-spec.eigenvalues[k]).exp();
        assert!((out.coeffs() - want).amax() < 1e-10);
        let g_mat = spec.heat_matrix();
        assert!((&g_mat * psi.coeffs() - out.coeffs()).amax() < 1e-10);
    }

    #[test]
    fn surrogate_observation_examples() {
        let cloud = PointCloud::equispaced(100).unwrap();
        let space = cloud.space();
        let centers = [0.25, 0.7];
        let delta = 0.05;
        let ones = space.vector(DVector::from_element(100, 1.0)).unwrap();
        let (obs, warnings) = surrogate_observe(&cloud, &ones, &centers, delta).unwrap();
        assert!(warnings.is_empty());
        for (j, &c) in centers.iter().enumerate() {
            let count = cloud.positions().iter().filter(|&&s| chord(s, c) < delta).count();
            assert_relative_eq!(obs[j], count as f64 / 100.0, epsilon = 1e-15);
            let indicator = DVector::from_fn(100, |i, _| if chord(cloud.positions()[i], c) < delta { 1.0 } else { 0.0 });
            let (ind_obs, _) = surrogate_observe(&cloud, &space.vector(indicator).unwrap(), &[c], delta).unwrap();
            assert_relative_eq!(ind_obs[0], obs[j], epsilon = 1e-15);
        }
        let (zero, _) = surrogate_observe(&cloud, &WeightedVector::zeros(&space), &centers, delta).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let (_, warnings) = surrogate_observe(&cloud, &ones, &[0.005], 1e-4).unwrap();
        assert_eq!(warnings, vec![Warning::EmptyBall { center: 0 }]);
    }

    #[test]
    fn connectivity_scale_examples() {
        assert_relative_eq!(connectivity_scale(std::f64::consts::E, 1, 1.0), (-1.0f64).exp().sqrt(), epsilon = 1e-12);
        assert_relative_eq!(connectivity_scale(100.0, 1, 1.0), 0.2146, epsilon = 1e-4);
        let mut prev = f64::INFINITY;
        for n in 3..2000 {
            let h = connectivity_scale(n as f64, 1, 1.0);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn cells_partition_the_circle() {
        let cloud = PointCloud::equispaced(8).unwrap();
        let (a, b) = cloud.cell(3);
        assert_relative_eq!(a, 3.0 / 8.0 - 1.0 / 16.0, epsilon = 1e-15);
        assert_relative_eq!(b - a, 1.0 / 8.0, epsilon = 1e-15);
        let basis = CellBasis::new(cloud.clone());
        let c: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(basis.evaluate(&c, 3.0 / 8.0), 3.0);
        assert_eq!(basis.evaluate(&c, 0.99), 0.0);
        assert_eq!(basis.evaluate(&c, 0.93), 7.0);
    }
}
