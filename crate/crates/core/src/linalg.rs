//! Dense linear-algebra helpers shared by the discretizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Condition estimate above which a solve is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Cholesky factorization with a cheap condition estimate taken from the
/// spread of the factor's diagonal.
pub fn cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m.clone()).ok_or(Error::Conditioning {
        context,
        condition: f64::INFINITY,
    })?;
    let cond = diag_condition(&chol);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::Conditioning {
            context,
            condition: cond,
        });
    }
    Ok(chol)
}

fn diag_condition(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (hi / lo).powi(2)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Eigendecomposition of the symmetric part of `m`, eigenvalues ascending.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let mut v: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `f(S)` for symmetric `S` with eigenvalues clamped at zero before `f` is applied.
pub fn sym_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(m);
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let fj = f(lam.max(0.0));
        scaled.column_mut(j).scale_mut(fj);
    }
    scaled * vecs.transpose()
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_function(m, f64::sqrt)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
}

/// Largest |eigenvalue| of a symmetric operator given only through products.
///
/// Small problems are assembled and solved densely; larger ones use Lanczos
/// with full reorthogonalization.
pub fn sym_max_abs_eigenvalue<F>(dim: usize, apply: F) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    if dim <= DENSE_EIGEN_LIMIT {
        let mut a = DMatrix::zeros(dim, dim);
        let mut e = DVector::zeros(dim);
        for j in 0..dim {
            e[j] = 1.0;
            a.set_column(j, &apply(&e));
            e[j] = 0.0;
        }
        return sym_eigenvalues(&a)
            .into_iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
    }
    lanczos_max_abs(dim, apply, LANCZOS_STEPS)
}

const DENSE_EIGEN_LIMIT: usize = 400;
const LANCZOS_STEPS: usize = 200;

pub(crate) fn lanczos_max_abs<F>(dim: usize, apply: F, max_steps: usize) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let steps = max_steps.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_705);
    let mut q = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut last = 0.0;
    for j in 0..steps {
        let mut w = apply(&q);
        let a = w.dot(&q);
        alphas.push(a);
        basis.push(q.clone());
        // two passes of classical Gram-Schmidt against every Lanczos vector
        for _ in 0..2 {
            for v in &basis {
                let c = w.dot(v);
                w.axpy(-c, v, 1.0);
            }
        }
        let b = w.norm();
        let scale = alphas.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        let done = b <= 1e-13 * scale || j + 1 == steps;
        if (j + 1) % 10 == 0 || done {
            let est = tridiagonal_max_abs(&alphas, &betas);
            if done || (est - last).abs() <= 1e-14 * est.max(1e-300) {
                return est;
            }
            last = est;
        }
        betas.push(b);
        q = w / b;
    }
    tridiagonal_max_abs(&alphas, &betas)
}

fn tridiagonal_max_abs(alphas: &[f64], betas: &[f64]) -> f64 {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]` with `per_panel` Gauss–Legendre points on each of `panels` panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, per_panel: usize) -> f64 {
    let (x, w) = gauss_legendre(per_panel);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * f(mid + 0.5 * width * xi);
        }
    }
    total * 0.5 * width
}

/// Solves a symmetric tridiagonal system for every column of `rhs`.
/// `diag` has length n, `off` length n-1.
pub(crate) fn tridiagonal_solve_columns(diag: &[f64], off: &[f64], rhs: &mut DMatrix<f64>) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    // Thomas algorithm; the modified super-diagonal is shared by all columns.
    let mut c = vec![0.0; n];
    let mut denom = vec![0.0; n];
    denom[0] = diag[0];
    for i in 1..n {
        c[i - 1] = off[i - 1] / denom[i - 1];
        denom[i] = diag[i] - off[i - 1] * c[i - 1];
    }
    for mut col in rhs.column_iter_mut() {
        col[0] /= denom[0];
        for i in 1..n {
            col[i] = (col[i] - off[i - 1] * col[i - 1]) / denom[i];
        }
        for i in (0..n - 1).rev() {
            let next = col[i + 1];
            col[i] -= c[i] * next;
        }
    }
}

/// `T * x` for every column, with `T` symmetric tridiagonal.
pub(crate) fn tridiagonal_mul_columns(diag: &[f64], off: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = diag.len();
    let mut out = DMatrix::zeros(n, x.ncols());
    for (j, col) in x.column_iter().enumerate() {
        for i in 0..n {
            let mut v = diag[i] * col[i];
            if i > 0 {
                v += off[i - 1] * col[i - 1];
            }
            if i + 1 < n {
                v += off[i] * col[i + 1];
            }
            out[(i, j)] = v;
        }
    }
    out
}
