//! Piecewise-linear finite elements on (0, 1) with homogeneous Dirichlet
//! conditions.
//!
//! Matrices are tridiagonal. They are returned dense for uniformity, but the
//! propagators and prior powers below work on the bands directly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CONDITION_LIMIT};
use crate::weighted::{BasisEvaluator, WeightedOperator, WeightedSpace};

/// Uniform mesh of (0, 1) with `n_interior` free nodes `x_i = i h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    n_interior: usize,
}

impl Mesh1D {
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior == 0 {
            return Err(Error::config("n_interior", "mesh needs at least one interior node"));
        }
        Ok(Self { n_interior })
    }

    /// Mesh with width `h`; `1/h` must be an integer of at least 2.
    pub fn with_width(h: f64) -> Result<Self> {
        let cells = integer_reciprocal(h).ok_or_else(|| {
            Error::config("h", format!("1/h must be an integer >= 2, got h = {h}"))
        })?;
        if cells < 2 {
            return Err(Error::config("h", "h must be at most 1/2"));
        }
        Self::new(cells - 1)
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn cells(&self) -> usize {
        self.n_interior + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_interior).map(|i| self.node(i)).collect()
    }
}

/// `Some(k)` if `1/x` is within rounding of the integer `k`.
pub(crate) fn integer_reciprocal(x: f64) -> Option<usize> {
    if !(x > 0.0) || !x.is_finite() {
        return None;
    }
    let r = 1.0 / x;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * r.max(1.0) && k >= 1.0).then_some(k as usize)
}

/// Scalar coefficient field on [0, 1], written `const:<v>` or `affine:<a>,<b>`
/// for `a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CoefficientFn {
    Const(f64),
    Affine { a: f64, b: f64 },
}

impl CoefficientFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            CoefficientFn::Const(v) => v,
            CoefficientFn::Affine { a, b } => a + b * x,
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match *self {
            CoefficientFn::Const(v) => Some(v),
            CoefficientFn::Affine { a, b } if b == 0.0 => Some(a),
            CoefficientFn::Affine { .. } => None,
        }
    }
}

impl FromStr for CoefficientFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("coefficient", format!("expected const:<v> or affine:<a>,<b>, got `{s}`"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        match kind.trim() {
            "const" => num(rest).map(CoefficientFn::Const).ok_or_else(bad),
            "affine" => {
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                match (num(a), num(b)) {
                    (Some(a), Some(b)) => Ok(CoefficientFn::Affine { a, b }),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for CoefficientFn {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CoefficientFn> for String {
    fn from(c: CoefficientFn) -> String {
        c.to_string()
    }
}

impl fmt::Display for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientFn::Const(v) => write!(f, "const:{v}"),
            CoefficientFn::Affine { a, b } => write!(f, "affine:{a},{b}"),
        }
    }
}

/// Coefficients of `A u = -(Theta u')' + b u` and the prior exponent `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients1D {
    pub theta: CoefficientFn,
    pub b: CoefficientFn,
    pub alpha: u32,
}

impl Coefficients1D {
    pub fn new(theta: CoefficientFn, b: CoefficientFn, alpha: u32) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::config("alpha", "alpha must be a positive integer"));
        }
        Ok(Self { theta, b, alpha })
    }

    pub fn constant(theta: f64, b: f64, alpha: u32) -> Result<Self> {
        Self::new(CoefficientFn::Const(theta), CoefficientFn::Const(b), alpha)
    }

    /// `(theta, b)` when both fields are constant.
    pub fn constants(&self) -> Option<(f64, f64)> {
        Some((self.theta.constant()?, self.b.constant()?))
    }
}

/// Symmetric tridiagonal matrix stored by its bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off[i];
                m[(i + 1, i)] = self.off[i];
            }
        }
        m
    }

    pub fn mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::tridiagonal_mul_columns(&self.diag, &self.off, x)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Tridiagonal) -> Tridiagonal {
        Tridiagonal {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + s * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + s * b).collect(),
        }
    }

    /// Solves in place after checking the LDL^T pivots for definiteness and conditioning.
    pub fn solve_in_place(&self, rhs: &mut DMatrix<f64>, context: &'static str) -> Result<()> {
        self.check_spd(context)?;
        linalg::tridiagonal_solve_columns(&self.diag, &self.off, rhs);
        Ok(())
    }

    fn check_spd(&self, context: &'static str) -> Result<()> {
        let n = self.dim();
        let mut pivot = self.diag[0];
        let (mut lo, mut hi) = (pivot, pivot);
        for i in 1..n {
            if !(pivot > 0.0) {
                break;
            }
            pivot = self.diag[i] - self.off[i - 1] * self.off[i - 1] / pivot;
            lo = lo.min(pivot);
            hi = hi.max(pivot);
        }
        if !(lo > 0.0) || hi / lo > CONDITION_LIMIT {
            return Err(Error::Conditioning {
                context,
                condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
            });
        }
        Ok(())
    }
}

pub fn mass_bands(mesh: &Mesh1D) -> Tridiagonal {
    let h = mesh.h();
    let n = mesh.n_interior();
    Tridiagonal {
        diag: vec![2.0 * h / 3.0; n],
        off: vec![h / 6.0; n.saturating_sub(1)],
    }
}

/// Mass matrix `M_ij = int phi_i phi_j`, tridiag(h/6, 2h/3, h/6).
pub fn assemble_mass(mesh: &Mesh1D) -> WeightedSpace {
    WeightedSpace::new(mass_bands(mesh).to_dense()).expect("P1 mass matrix is SPD")
}

/// Stiffness bands from 2-point Gauss-Legendre quadrature on each element.
pub fn stiffness_bands(mesh: &Mesh1D, coeffs: &Coefficients1D) -> Result<Tridiagonal> {
    let n = mesh.n_interior();
    let h = mesh.h();
    let (gx, gw) = linalg::gauss_legendre(2);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    // Element e spans [e h, (e+1) h]; its left node is interior index e-1, its right node e.
    for e in 0..mesh.cells() {
        let x0 = e as f64 * h;
        let (mut kll, mut krr, mut klr) = (0.0, 0.0, 0.0);
        for (&t, &w) in gx.iter().zip(&gw) {
            let x = x0 + 0.5 * h * (t + 1.0);
            let theta = coeffs.theta.eval(x);
            if !(theta > 0.0) {
                return Err(Error::Coefficient { name: "theta", x, value: theta });
            }
            let b = coeffs.b.eval(x);
            if !(b >= 0.0) {
                return Err(Error::Coefficient { name: "b", x, value: b });
            }
            let jw = 0.5 * h * w;
            let right = (x - x0) / h;
            let left = 1.0 - right;
            let grad = theta / (h * h);
            kll += jw * (grad + b * left * left);
            krr += jw * (grad + b * right * right);
            klr += jw * (-grad + b * left * right);
        }
        let has_left = e >= 1;
        let has_right = e < n;
        if has_left {
            diag[e - 1] += kll;
        }
        if has_right {
            diag[e] += krr;
        }
        if has_left && has_right {
            off[e - 1] += klr;
        }
    }
    Ok(Tridiagonal { diag, off })
}

/// Stiffness matrix `K_ij = int Theta phi_i' phi_j' + b phi_i phi_j`.
pub fn assemble_stiffness(mesh: &Mesh1D, coeffs: &Coefficients1D) -> Result<DMatrix<f64>> {
    Ok(stiffness_bands(mesh, coeffs)?.to_dense())
}

/// Matérn prior covariance `C0 = (K^{-1} M)^alpha`, by `alpha` repeated solves.
pub fn fem_prior_covariance(mesh: &Mesh1D, coeffs: &Coefficients1D) -> Result<WeightedOperator> {
    let m = mass_bands(mesh);
    let k = stiffness_bands(mesh, coeffs)?;
    let n = mesh.n_interior();
    let mut c = DMatrix::identity(n, n);
    for _ in 0..coeffs.alpha {
        let mut next = m.mul(&c);
        k.solve_in_place(&mut next, "stiffness solve")?;
        c = next;
    }
    assemble_mass(mesh).operator(c)
}

/// Generalized eigenvalues of `(K, M)` in ascending order.
pub fn generalized_eigenvalues(mesh: &Mesh1D, coeffs: &Coefficients1D) -> Result<Vec<f64>> {
    let k = assemble_stiffness(mesh, coeffs)?;
    let chol = linalg::cholesky(&mass_bands(mesh).to_dense(), "mass matrix")?;
    let l = chol.l();
    let a = l.solve_lower_triangular(&k).expect("nonzero diagonal");
    let s = l
        .solve_lower_triangular(&a.transpose())
        .expect("nonzero diagonal");
    Ok(linalg::sym_eigenvalues(&s))
}

/// Heat propagator `G` for `u_t = u_xx` on (0, 1) over unit time.
#[derive(Debug, Clone)]
pub struct HeatDiscretization {
    pub dt: f64,
    pub steps: usize,
    pub propagator: DMatrix<f64>,
}

impl HeatDiscretization {
    /// Amplification of a generalized eigenvector with eigenvalue `lambda` after unit time.
    pub fn amplification(lambda: f64, dt: f64) -> f64 {
        let steps = (1.0 / dt).round() as i32;
        ((1.0 - 0.5 * lambda * dt) / (1.0 + 0.5 * lambda * dt)).powi(steps)
    }
}

/// Crank-Nicolson, `(M + dt/2 K) A_{k+1} = (M - dt/2 K) A_k`, iterated `1/dt` times
/// with `K` the Dirichlet Laplacian stiffness.
pub fn crank_nicolson_propagator(mesh: &Mesh1D, dt: f64) -> Result<HeatDiscretization> {
    let steps = integer_reciprocal(dt)
        .ok_or_else(|| Error::config("dt", format!("1/dt must be an integer, got dt = {dt}")))?;
    let laplace = Coefficients1D::constant(1.0, 0.0, 1)?;
    let m = mass_bands(mesh);
    let k = stiffness_bands(mesh, &laplace)?;
    let implicit = m.axpy(0.5 * dt, &k);
    let explicit = m.axpy(-0.5 * dt, &k);
    let n = mesh.n_interior();
    let mut g = DMatrix::identity(n, n);
    for _ in 0..steps {
        let mut next = explicit.mul(&g);
        implicit.solve_in_place(&mut next, "Crank-Nicolson step")?;
        g = next;
    }
    Ok(HeatDiscretization {
        dt,
        steps,
        propagator: g,
    })
}

/// `int_a^b phi_i` for the hat at node `xi` with half-width `h`.
fn hat_integral(xi: f64, h: f64, a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    // rising half on [xi - h, xi], value (x - xi + h) / h
    let (lo, hi) = (a.max(xi - h), b.min(xi));
    if hi > lo {
        let s = xi - h;
        total += ((hi - s).powi(2) - (lo - s).powi(2)) / (2.0 * h);
    }
    // falling half on [xi, xi + h], value (xi + h - x) / h
    let (lo, hi) = (a.max(xi), b.min(xi + h));
    if hi > lo {
        let e = xi + h;
        total += ((e - lo).powi(2) - (e - hi).powi(2)) / (2.0 * h);
    }
    total
}

/// Row `k` holds `int_{B_delta(c_k) cap [0,1]} phi_i`, so `O v` is the vector of local integrals.
pub fn observation_matrix(mesh: &Mesh1D, centers: &[f64], delta: f64) -> Result<DMatrix<f64>> {
    if !(delta > 0.0) {
        return Err(Error::config("delta", "delta must be positive"));
    }
    let h = mesh.h();
    let mut o = DMatrix::zeros(centers.len(), mesh.n_interior());
    for (k, &c) in centers.iter().enumerate() {
        let (a, b) = ((c - delta).max(0.0), (c + delta).min(1.0));
        if b <= a {
            continue;
        }
        for i in 0..mesh.n_interior() {
            o[(k, i)] = hat_integral(mesh.node(i), h, a, b);
        }
    }
    Ok(o)
}

/// Exact local integrals of the piecewise-linear extension of `v`.
pub fn observe_local_average(
    mesh: &Mesh1D,
    v: &DVector<f64>,
    centers: &[f64],
    delta: f64,
) -> Result<DVector<f64>> {
    if v.len() != mesh.n_interior() {
        return Err(Error::dim("local-average observation", mesh.n_interior(), v.len()));
    }
    Ok(observation_matrix(mesh, centers, delta)? * v)
}

/// Heat-then-observe forward map `F = O G`.
pub fn fem_forward(mesh: &Mesh1D, dt: f64, centers: &[f64], delta: f64) -> Result<DMatrix<f64>> {
    let heat = crank_nicolson_propagator(mesh, dt)?;
    Ok(observation_matrix(mesh, centers, delta)? * heat.propagator)
}

/// Load vector `b_i = int f phi_i` by Gauss-Legendre quadrature on each half-element.
pub fn load_vector(mesh: &Mesh1D, f: impl Fn(f64) -> f64, points_per_element: usize) -> DVector<f64> {
    let h = mesh.h();
    let (gx, gw) = linalg::gauss_legendre(points_per_element);
    DVector::from_fn(mesh.n_interior(), |i, _| {
        let xi = mesh.node(i);
        let mut total = 0.0;
        for (lo, rising) in [(xi - h, true), (xi, false)] {
            for (&t, &w) in gx.iter().zip(&gw) {
                let x = lo + 0.5 * h * (t + 1.0);
                let phi = if rising { (x - lo) / h } else { 1.0 - (x - lo) / h };
                total += 0.5 * h * w * f(x) * phi;
            }
        }
        total
    })
}

/// Nodal interpolation from `coarse` into a nested `fine` mesh, exact on P1 functions.
pub fn prolongation(coarse: &Mesh1D, fine: &Mesh1D) -> Result<DMatrix<f64>> {
    let ratio = fine.cells() / coarse.cells();
    if ratio == 0 || ratio * coarse.cells() != fine.cells() {
        return Err(Error::config(
            "h",
            format!(
                "fine mesh with {} cells is not nested in coarse mesh with {} cells",
                fine.cells(),
                coarse.cells()
            ),
        ));
    }
    let basis = HatBasis::new(*coarse);
    Ok(DMatrix::from_fn(fine.n_interior(), coarse.n_interior(), |f, c| {
        basis.hat(c, fine.node(f))
    }))
}

/// Piecewise-linear extension `P* u`.
#[derive(Debug, Clone, Copy)]
pub struct HatBasis {
    mesh: Mesh1D,
}

impl HatBasis {
    pub fn new(mesh: Mesh1D) -> Self {
        Self { mesh }
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn hat(&self, i: usize, x: f64) -> f64 {
        (1.0 - (x - self.mesh.node(i)).abs() / self.mesh.h()).max(0.0)
    }
}

impl BasisEvaluator for HatBasis {
    fn dim(&self) -> usize {
        self.mesh.n_interior()
    }

    fn evaluate(&self, coeffs: &[f64], x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let h = self.mesh.h();
        let s = x / h;
        let cell = (s.floor() as usize).min(self.mesh.cells() - 1);
        let t = s - cell as f64;
        // nodes of the cell are global indices cell and cell+1; interior index = global - 1
        let left = if cell >= 1 { coeffs[cell - 1] } else { 0.0 };
        let right = if cell < self.mesh.n_interior() { coeffs[cell] } else { 0.0 };
        (1.0 - t) * left + t * right
    }
}
