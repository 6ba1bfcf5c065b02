//! The weighted coefficient space `R^n_M` with inner product `<u, v>_M = u^T M v`.
//!
//! A basis `{phi_i}` of a subspace of a Hilbert space induces the Gram (mass)
//! matrix `M`; coefficient vectors then carry the geometry of the functions
//! they represent. Adjoints in this space differ from transposes:
//! `A* = M^{-1} A^T M` for maps of the space into itself and
//! `F^nat = M^{-1} F^T` for maps into Euclidean data space.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug)]
enum Mass {
    /// `M = s I`, kept implicit so large point clouds stay cheap.
    Scaled(f64),
    Dense {
        matrix: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

#[derive(Debug)]
struct SpaceInner {
    dim: usize,
    mass: Mass,
}

/// Coefficient space with an SPD mass matrix. Cloning shares the factorization.
#[derive(Debug, Clone)]
pub struct WeightedSpace {
    inner: Arc<SpaceInner>,
}

impl PartialEq for WeightedSpace {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.inner, &other.inner) {
            return true;
        }
        match (&self.inner.mass, &other.inner.mass) {
            (Mass::Scaled(a), Mass::Scaled(b)) => self.inner.dim == other.inner.dim && a == b,
            (Mass::Dense { matrix: a, .. }, Mass::Dense { matrix: b, .. }) => a == b,
            _ => self.mass_matrix() == other.mass_matrix(),
        }
    }
}

impl WeightedSpace {
    /// Builds the space from a mass matrix, which must be exactly symmetric and
    /// admit a Cholesky factorization within the conditioning limit.
    pub fn new(mass: DMatrix<f64>) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 || mass.ncols() != n {
            return Err(Error::dim("mass matrix", n.max(1), mass.ncols()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if mass[(i, j)] != mass[(j, i)] {
                    return Err(Error::Conditioning {
                        context: "mass matrix is not symmetric",
                        condition: f64::NAN,
                    });
                }
            }
        }
        let chol = linalg::cholesky(&mass, "mass matrix")?;
        Ok(Self {
            inner: Arc::new(SpaceInner {
                dim: n,
                mass: Mass::Dense { matrix: mass, chol },
            }),
        })
    }

    pub fn euclidean(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    /// `M = scale * I`.
    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        assert!(n > 0 && scale > 0.0, "scaled identity needs n > 0 and scale > 0");
        Self {
            inner: Arc::new(SpaceInner {
                dim: n,
                mass: Mass::Scaled(scale),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        match &self.inner.mass {
            Mass::Scaled(s) => DMatrix::identity(self.dim(), self.dim()) * *s,
            Mass::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `Some(s)` when `M = s I`.
    pub fn scalar_mass(&self) -> Option<f64> {
        match self.inner.mass {
            Mass::Scaled(s) => Some(s),
            Mass::Dense { .. } => None,
        }
    }

    pub fn mass_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.inner.mass {
            Mass::Scaled(s) => v * *s,
            Mass::Dense { matrix, .. } => matrix * v,
        }
    }

    pub fn mass_mul_mat(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.inner.mass {
            Mass::Scaled(s) => a * *s,
            Mass::Dense { matrix, .. } => matrix * a,
        }
    }

    /// `M^{-1} b`.
    pub fn mass_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.inner.mass {
            Mass::Scaled(s) => b / *s,
            Mass::Dense { chol, .. } => chol.solve(b),
        }
    }

    /// `M^{-1} B` column by column.
    pub fn mass_solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.inner.mass {
            Mass::Scaled(s) => b / *s,
            Mass::Dense { chol, .. } => chol.solve(b),
        }
    }

    /// `A M^{-1}`, i.e. right division by the mass matrix.
    pub fn mass_solve_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.mass_solve_mat(&a.transpose()).transpose()
    }

    /// Upper factor `R` with `M = R^T R`, so `||u||_M = ||R u||_2`.
    pub fn factor_mul(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.inner.mass {
            Mass::Scaled(s) => a * s.sqrt(),
            Mass::Dense { chol, .. } => chol.l().transpose() * a,
        }
    }

    /// `A R^{-1}`.
    pub fn factor_solve_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.inner.mass {
            Mass::Scaled(s) => a / s.sqrt(),
            Mass::Dense { chol, .. } => {
                // X R = A  <=>  R^T X^T = A^T  <=>  L X^T = A^T
                let xt = chol
                    .l_dirty()
                    .solve_lower_triangular(&a.transpose())
                    .expect("Cholesky factor has a nonzero diagonal");
                xt.transpose()
            }
        }
    }

    /// Similarity transform `R A R^{-1}`, which turns `M`-adjoints into transposes.
    pub fn to_euclidean_frame(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor_solve_right(&self.factor_mul(a))
    }

    pub fn inner_raw(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.mass_mul(v))
    }

    pub fn norm_raw(&self, u: &DVector<f64>) -> f64 {
        self.inner_raw(u, u).max(0.0).sqrt()
    }

    pub fn vector(&self, coeffs: DVector<f64>) -> Result<WeightedVector> {
        WeightedVector::new(coeffs, self.clone())
    }

    pub fn operator(&self, matrix: DMatrix<f64>) -> Result<WeightedOperator> {
        WeightedOperator::new(matrix, self.clone())
    }

    pub(crate) fn check(&self, other: &WeightedSpace, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dim(context, self.dim(), other.dim()));
        }
        if self != other {
            return Err(Error::dim(context, self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// Coefficients `u_i` of `u = sum_i u_i phi_i`.
#[derive(Debug, Clone)]
pub struct WeightedVector {
    coeffs: DVector<f64>,
    space: WeightedSpace,
}

impl WeightedVector {
    pub fn new(coeffs: DVector<f64>, space: WeightedSpace) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::dim("weighted vector", space.dim(), coeffs.len()));
        }
        Ok(Self { coeffs, space })
    }

    pub fn zeros(space: &WeightedSpace) -> Self {
        Self {
            coeffs: DVector::zeros(space.dim()),
            space: space.clone(),
        }
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    pub fn norm(&self) -> f64 {
        self.space.norm_raw(&self.coeffs)
    }
}

/// Linear map of `R^n_M` into itself, stored as its matrix.
#[derive(Debug, Clone)]
pub struct WeightedOperator {
    matrix: DMatrix<f64>,
    space: WeightedSpace,
}

impl WeightedOperator {
    pub fn new(matrix: DMatrix<f64>, space: WeightedSpace) -> Result<Self> {
        let n = space.dim();
        if matrix.nrows() != n {
            return Err(Error::dim("weighted operator rows", n, matrix.nrows()));
        }
        if matrix.ncols() != n {
            return Err(Error::dim("weighted operator columns", n, matrix.ncols()));
        }
        Ok(Self { matrix, space })
    }

    pub fn identity(space: &WeightedSpace) -> Self {
        Self {
            matrix: DMatrix::identity(space.dim(), space.dim()),
            space: space.clone(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    pub fn apply(&self, u: &WeightedVector) -> Result<WeightedVector> {
        self.space.check(u.space(), "operator application")?;
        Ok(WeightedVector {
            coeffs: &self.matrix * &u.coeffs,
            space: self.space.clone(),
        })
    }

    /// Euclidean form `A M^{-1}`; symmetric exactly when `A` is `M`-self-adjoint.
    pub fn euclidean_form(&self) -> DMatrix<f64> {
        self.space.mass_solve_right(&self.matrix)
    }

    /// Frobenius norm of `A - A*`.
    pub fn self_adjoint_residual(&self) -> f64 {
        let adj = adjoint_matrix(&self.space, &self.matrix);
        (&self.matrix - adj).norm()
    }
}

/// Pointwise evaluation of `P* u` for coefficient vectors of some basis.
pub trait BasisEvaluator {
    fn dim(&self) -> usize;

    /// Value of `sum_i coeffs[i] phi_i(x)`.
    fn evaluate(&self, coeffs: &[f64], x: f64) -> f64;
}

pub fn weighted_inner(u: &WeightedVector, v: &WeightedVector) -> Result<f64> {
    u.space.check(&v.space, "weighted inner product")?;
    Ok(u.space.inner_raw(&u.coeffs, &v.coeffs))
}

/// Discretization map: the coefficients `M^{-1} b` of the orthogonal projection,
/// given the load vector `b_i = <u, phi_i>`.
pub fn discretize(load: &DVector<f64>, space: &WeightedSpace) -> Result<WeightedVector> {
    if load.len() != space.dim() {
        return Err(Error::dim("discretize", space.dim(), load.len()));
    }
    let coeffs = space.mass_solve(load);
    let residual = (space.mass_mul(&coeffs) - load).norm();
    if residual > 1e-10 * load.norm() {
        return Err(Error::Conditioning {
            context: "projection residual",
            condition: residual / load.norm(),
        });
    }
    Ok(WeightedVector {
        coeffs,
        space: space.clone(),
    })
}

/// `F^nat = M^{-1} F^T`, the adjoint of `F: R^n_M -> R^{d_y}`.
pub fn adjoint_forward(forward: &DMatrix<f64>, space: &WeightedSpace) -> Result<DMatrix<f64>> {
    if forward.ncols() != space.dim() {
        return Err(Error::dim("adjoint of forward map", space.dim(), forward.ncols()));
    }
    Ok(space.mass_solve_mat(&forward.transpose()))
}

fn adjoint_matrix(space: &WeightedSpace, a: &DMatrix<f64>) -> DMatrix<f64> {
    space.mass_solve_mat(&space.mass_mul_mat(a).transpose())
}

/// `A* = M^{-1} A^T M`.
pub fn adjoint_operator(op: &WeightedOperator) -> Result<WeightedOperator> {
    op.space.operator(adjoint_matrix(&op.space, &op.matrix))
}

/// `sup_{||u||_M = 1} ||A u||_M`, the 2-norm of `R A R^{-1}`.
pub fn operator_norm_m(op: &WeightedOperator) -> f64 {
    linalg::spectral_norm(&op.space.to_euclidean_frame(&op.matrix))
}

/// Norm of `F: R^n_M -> R^{d_y}` (Euclidean data space).
pub fn forward_norm(forward: &DMatrix<f64>, space: &WeightedSpace) -> f64 {
    linalg::spectral_norm(&space.factor_solve_right(forward))
}

/// Norm of `K: R^{d_y} -> R^n_M`.
pub fn gain_norm(gain: &DMatrix<f64>, space: &WeightedSpace) -> f64 {
    linalg::spectral_norm(&space.factor_mul(gain))
}

/// Trace of the matrix, which equals the trace of the operator in any basis.
pub fn weighted_trace(op: &WeightedOperator) -> f64 {
    op.matrix.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let b = random_matrix(n, n, seed);
        let mut m = &b * b.transpose() + DMatrix::identity(n, n) * (n as f64);
        linalg::symmetrize(&mut m);
        m
    }

    fn fem_mass_h3() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0 / 9.0, 1.0 / 18.0, 1.0 / 18.0, 2.0 / 9.0])
    }

    #[test]
    fn inner_product_examples() {
        let id = WeightedSpace::euclidean(2);
        let u = id.vector(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let v = id.vector(DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(weighted_inner(&u, &v).unwrap(), 0.0);

        let fem = WeightedSpace::new(fem_mass_h3()).unwrap();
        let ones = fem.vector(DVector::from_element(2, 1.0)).unwrap();
        assert_relative_eq!(weighted_inner(&ones, &ones).unwrap(), 5.0 / 9.0, epsilon = 1e-15);

        let half = WeightedSpace::new(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let a = half.vector(DVector::from_element(1, 2.0)).unwrap();
        let b = half.vector(DVector::from_element(1, 3.0)).unwrap();
        assert_relative_eq!(weighted_inner(&a, &b).unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let a = WeightedSpace::euclidean(2);
        let b = WeightedSpace::euclidean(3);
        let u = WeightedVector::zeros(&a);
        let v = WeightedVector::zeros(&b);
        assert!(matches!(weighted_inner(&u, &v), Err(Error::Dimension { .. })));
        assert!(a.vector(DVector::zeros(3)).is_err());
        assert!(adjoint_forward(&DMatrix::zeros(1, 3), &a).is_err());
    }

    #[test]
    fn asymmetric_or_indefinite_mass_is_rejected() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(WeightedSpace::new(asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(WeightedSpace::new(indef).is_err());
        let illcond = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        assert!(matches!(
            WeightedSpace::new(illcond),
            Err(Error::Conditioning { .. })
        ));
    }

    #[test]
    fn discretize_examples() {
        let m = fem_mass_h3();
        let space = WeightedSpace::new(m.clone()).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let got = discretize(&(&m * &e1), &space).unwrap();
        assert!((got.coeffs() - &e1).norm() < 1e-14);
        let zero = discretize(&DVector::zeros(2), &space).unwrap();
        assert_eq!(zero.coeffs().norm(), 0.0);
    }

    #[test]
    fn adjoint_forward_examples() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let id = WeightedSpace::euclidean(3);
        assert_eq!(adjoint_forward(&f, &id).unwrap(), f.transpose());

        let two = WeightedSpace::new(DMatrix::identity(2, 2) * 2.0).unwrap();
        let f = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let adj = adjoint_forward(&f, &two).unwrap();
        assert!((adj - DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).norm() < 1e-15);

        let space = WeightedSpace::new(random_spd(5, 100)).unwrap();
        let f = random_matrix(2, 5, 0);
        let u = random_matrix(5, 1, 1).column(0).into_owned();
        let y = random_matrix(2, 1, 2).column(0).into_owned();
        let adj = adjoint_forward(&f, &space).unwrap();
        let lhs = (&f * &u).dot(&y);
        let rhs = space.inner_raw(&u, &(&adj * &y));
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn adjoint_operator_examples() {
        let id = WeightedSpace::euclidean(2);
        let sym = id
            .operator(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(adjoint_operator(&sym).unwrap().matrix(), sym.matrix());

        let m = WeightedSpace::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        let a = m
            .operator(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]))
            .unwrap();
        let adj = adjoint_operator(&a).unwrap();
        // <Au, v>_M = 4 u_2 v_1 forces A* e_1 = 4 e_2
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 4.0, 0.0]);
        assert!((adj.matrix() - want).norm() < 1e-15);

        let space = WeightedSpace::new(random_spd(4, 7)).unwrap();
        let a = space.operator(random_matrix(4, 4, 1)).unwrap();
        let twice = adjoint_operator(&adjoint_operator(&a).unwrap()).unwrap();
        assert!((twice.matrix() - a.matrix()).norm() <= 1e-13);
    }

    #[test]
    fn operator_norm_examples() {
        let space = WeightedSpace::new(random_spd(3, 9)).unwrap();
        assert_relative_eq!(
            operator_norm_m(&WeightedOperator::identity(&space)),
            1.0,
            max_relative = 1e-12
        );

        let id = WeightedSpace::euclidean(2);
        let d = id
            .operator(DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])))
            .unwrap();
        assert_relative_eq!(operator_norm_m(&d), 3.0, max_relative = 1e-12);

        let m = WeightedSpace::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        let a = m
            .operator(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]))
            .unwrap();
        // ||A u||_M^2 = 4 u_2^2 and ||u||_M^2 = 4 u_1^2 + u_2^2, maximized at u = e_2.
        assert_relative_eq!(operator_norm_m(&a), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn operator_norm_matches_power_iteration_oracle() {
        let mspd = random_spd(6, 21);
        let space = WeightedSpace::new(mspd.clone()).unwrap();
        let a = random_matrix(6, 6, 22);
        // oracle: sup ||Au||_M / ||u||_M via the generalized eigenproblem A^T M A v = s M v,
        // solved by inverse-free power iteration on M^{-1} A^T M A.
        let b = mspd.clone().cholesky().unwrap().solve(&(a.transpose() * &mspd * &a));
        let mut v = DVector::from_element(6, 1.0);
        let mut est = 0.0;
        for _ in 0..5000 {
            let w = &b * &v;
            est = w.norm() / v.norm();
            v = w / v.norm();
        }
        let op = space.operator(a).unwrap();
        assert_relative_eq!(operator_norm_m(&op), est.sqrt(), max_relative = 1e-8);
    }

    #[test]
    fn trace_examples() {
        let id3 = WeightedSpace::euclidean(3);
        assert_eq!(weighted_trace(&WeightedOperator::identity(&id3)), 3.0);

        let space = WeightedSpace::new(random_spd(2, 3)).unwrap();
        let d = space
            .operator(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])))
            .unwrap();
        assert_eq!(weighted_trace(&d), 5.0);

        let mspd = random_spd(5, 4);
        let space = WeightedSpace::new(mspd.clone()).unwrap();
        let b = {
            let r = random_matrix(5, 5, 2);
            &r + r.transpose()
        };
        let half = linalg::sym_sqrt(&mspd);
        let half_inv = half.clone().try_inverse().unwrap();
        let a = space.operator(&half * &b * half_inv).unwrap();
        assert!((weighted_trace(&a) - b.trace()).abs() <= 1e-10);
    }

    #[test]
    fn scaled_identity_agrees_with_dense() {
        let s = WeightedSpace::scaled_identity(4, 0.25);
        let d = WeightedSpace::new(DMatrix::identity(4, 4) * 0.25).unwrap();
        let a = random_matrix(4, 4, 5);
        let f = random_matrix(2, 4, 6);
        let os = s.operator(a.clone()).unwrap();
        let od = d.operator(a).unwrap();
        assert_relative_eq!(operator_norm_m(&os), operator_norm_m(&od), max_relative = 1e-12);
        assert!((adjoint_forward(&f, &s).unwrap() - adjoint_forward(&f, &d).unwrap()).norm() < 1e-13);
        assert_relative_eq!(forward_norm(&f, &s), forward_norm(&f, &d), max_relative = 1e-12);
    }
}
