//! Fourier-Galerkin truncation of the periodic viscous Burgers equation
//! `v_t + (v^2/2)_x = nu v_xx + f` on the unit-circumference circle.
//!
//! A state holds real coefficients `[a_1, b_1, ..., a_n, b_n]` of
//! `v = sum_k sqrt(2) (a_k cos(2 pi k x) + b_k sin(2 pi k x))`; the mean mode is
//! excluded. Internally `vhat_k = (a_k - i b_k) / sqrt(2)`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DVector;

use super::ForwardModel;
use crate::error::{Error, Result};

const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGalerkinBurgers {
    pub n_modes: usize,
    pub nu: f64,
    pub t_obs: f64,
    /// Largest time step; the actual step divides `t_obs` evenly.
    pub dt: f64,
    /// Forcing coefficients in the state layout (empty means zero).
    pub forcing: Vec<f64>,
    pub obs_points: Vec<f64>,
    /// With `false` the quadratic term is dropped.
    pub nonlinear: bool,
}

#[derive(Clone, Copy, Default)]
struct C {
    re: f64,
    im: f64,
}

impl C {
    fn mul(self, o: C) -> C {
        C {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    fn conj(self) -> C {
        C { re: self.re, im: -self.im }
    }
}

impl SpectralGalerkinBurgers {
    pub fn new(n_modes: usize, nu: f64, t_obs: f64, dt: f64, obs_points: Vec<f64>) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::config("n_modes", "at least 2 Fourier modes are needed"));
        }
        if !(nu > 0.0) {
            return Err(Error::config("nu", "viscosity must be positive"));
        }
        if !(t_obs >= 0.0) {
            return Err(Error::config("t_obs", "observation time must be nonnegative"));
        }
        if !(dt > 0.0) {
            return Err(Error::config("dt", "time step must be positive"));
        }
        Ok(Self {
            n_modes,
            nu,
            t_obs,
            dt,
            forcing: Vec::new(),
            obs_points,
            nonlinear: true,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    /// Prior variances `((2 pi k)^2)^{-alpha}` in the state layout.
    pub fn prior_variances(&self, alpha: u32) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let k = (i / 2 + 1) as f64;
            (2.0 * PI * k).powi(2).powi(-(alpha as i32))
        })
    }

    fn to_complex(&self, state: &DVector<f64>) -> Vec<C> {
        (0..self.n_modes)
            .map(|k| C {
                re: state[2 * k] / SQRT_2,
                im: -state[2 * k + 1] / SQRT_2,
            })
            .collect()
    }

    fn to_real(&self, v: &[C]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (k, c) in v.iter().enumerate() {
            out[2 * k] = SQRT_2 * c.re;
            out[2 * k + 1] = -SQRT_2 * c.im;
        }
        out
    }

    /// Nonlinear term plus forcing, `-(1/2) i 2 pi k sum_{p+q=k} vhat_p vhat_q + fhat_k`.
    fn rhs(&self, v: &[C], forcing: &[C]) -> Vec<C> {
        let n = self.n_modes as i64;
        let coeff = |p: i64| -> C {
            if p > 0 {
                v[(p - 1) as usize]
            } else if p < 0 {
                v[(-p - 1) as usize].conj()
            } else {
                C::default()
            }
        };
        (1..=n)
            .map(|k| {
                let mut g = forcing.get((k - 1) as usize).copied().unwrap_or_default();
                if self.nonlinear {
                    let mut s = C::default();
                    for p in (k - n)..=n {
                        let q = k - p;
                        if p == 0 || q == 0 || q.abs() > n {
                            continue;
                        }
                        let t = coeff(p).mul(coeff(q));
                        s.re += t.re;
                        s.im += t.im;
                    }
                    // -(1/2) i w s
                    let w = 2.0 * PI * k as f64;
                    g.re += 0.5 * w * s.im;
                    g.im -= 0.5 * w * s.re;
                }
                g
            })
            .collect()
    }

    /// State at `t_obs` by integrating-factor Heun steps.
    pub fn solve(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return Err(Error::dim("Burgers initial state", self.dim(), u.len()));
        }
        let steps = (self.t_obs / self.dt).ceil() as usize;
        if steps == 0 {
            return Ok(u.clone());
        }
        let dt = self.t_obs / steps as f64;
        let decay: Vec<f64> = (1..=self.n_modes)
            .map(|k| (-self.nu * (2.0 * PI * k as f64).powi(2) * dt).exp())
            .collect();
        let forcing = if self.forcing.is_empty() {
            Vec::new()
        } else {
            self.to_complex(&DVector::from_column_slice(&self.forcing))
        };
        let mut v = self.to_complex(u);
        for step in 0..steps {
            let g0 = self.rhs(&v, &forcing);
            let pred: Vec<C> = (0..self.n_modes)
                .map(|k| C {
                    re: decay[k] * (v[k].re + dt * g0[k].re),
                    im: decay[k] * (v[k].im + dt * g0[k].im),
                })
                .collect();
            let g1 = self.rhs(&pred, &forcing);
            for k in 0..self.n_modes {
                v[k].re = decay[k] * v[k].re + 0.5 * dt * (decay[k] * g0[k].re + g1[k].re);
                v[k].im = decay[k] * v[k].im + 0.5 * dt * (decay[k] * g0[k].im + g1[k].im);
            }
            let norm = v.iter().map(|c| c.re * c.re + c.im * c.im).sum::<f64>().sqrt() * SQRT_2;
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence {
                    time: (step + 1) as f64 * dt,
                    norm,
                });
            }
        }
        Ok(self.to_real(&v))
    }

    /// Point values `v(x)` of a state.
    pub fn evaluate(&self, state: &DVector<f64>, x: f64) -> f64 {
        (0..self.n_modes)
            .map(|k| {
                let w = 2.0 * PI * (k + 1) as f64 * x;
                SQRT_2 * (state[2 * k] * w.cos() + state[2 * k + 1] * w.sin())
            })
            .sum()
    }

    pub fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.obs_points.len(), self.obs_points.iter().map(|&x| self.evaluate(state, x)))
    }

    /// `L2` norm of the represented field; the basis is orthonormal.
    pub fn energy_norm(state: &DVector<f64>) -> f64 {
        state.norm()
    }
}

/// Observations of the Burgers state at `t_obs`.
#[derive(Debug, Clone)]
pub struct BurgersForward(pub SpectralGalerkinBurgers);

impl ForwardModel for BurgersForward {
    fn input_dim(&self) -> usize {
        self.0.dim()
    }

    fn output_dim(&self) -> usize {
        self.0.obs_points.len()
    }

    fn eval(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.0.observe(&self.0.solve(u)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{factor_prior, PriorFactor};
    use crate::map::{om_eval, om_minimize, MinimizeOptions, OMFunctional};
    use crate::weighted::WeightedSpace;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn model(n: usize) -> SpectralGalerkinBurgers {
        SpectralGalerkinBurgers::new(n, 0.05, 0.01, 1e-3, vec![0.1, 0.35, 0.6, 0.85]).unwrap()
    }

    fn prior_factor(m: &SpectralGalerkinBurgers, alpha: u32) -> PriorFactor {
        let s = WeightedSpace::euclidean(m.dim());
        let c = DMatrix::from_diagonal(&m.prior_variances(alpha));
        factor_prior(&s.operator(c).unwrap()).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let m = model(8);
        let out = BurgersForward(m.clone()).eval(&DVector::zeros(16)).unwrap();
        assert_eq!(out.norm(), 0.0);
    }

    #[test]
    fn small_single_mode_decays_viscously() {
        let mut m = model(8);
        m.t_obs = 0.2;
        let mut u = DVector::zeros(16);
        u[0] = 1e-3;
        let state = m.solve(&u).unwrap();
        let factor = (-m.nu * (2.0 * PI).powi(2) * m.t_obs).exp();
        for &x in &[0.0, 0.2, 0.45, 0.7] {
            let want = 1e-3 * factor * SQRT_2 * (2.0 * PI * x).cos();
            let got = m.evaluate(&state, x);
            assert!((got - want).abs() <= 1e-3 * 1e-3 * SQRT_2, "x = {x}");
        }
    }

    #[test]
    fn linear_part_is_exact() {
        let mut m = model(6);
        m.nonlinear = false;
        m.t_obs = 0.3;
        let u = DVector::from_fn(12, |i, _| (i as f64 + 1.0).recip());
        let state = m.solve(&u).unwrap();
        for i in 0..12 {
            let k = (i / 2 + 1) as f64;
            let want = u[i] * (-m.nu * (2.0 * PI * k).powi(2) * m.t_obs).exp();
            assert!((state[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn energy_does_not_grow() {
        let m = model(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let u = DVector::from_fn(32, |i, _| {
                let k = (i / 2 + 1) as f64;
                Distribution::<f64>::sample(&StandardNormal, &mut rng) / k
            });
            let out = m.solve(&u).unwrap();
            assert!(SpectralGalerkinBurgers::energy_norm(&out) <= SpectralGalerkinBurgers::energy_norm(&u));
        }
    }

    #[test]
    fn inviscid_limit_conserves_energy() {
        // with tiny viscosity the quadratic term alone moves energy between modes
        let mut m = model(8);
        m.nu = 1e-12;
        m.t_obs = 0.01;
        m.dt = 1e-5;
        let u = DVector::from_fn(16, |i, _| 0.1 / (i as f64 + 1.0));
        let out = m.solve(&u).unwrap();
        let rel = (out.norm() - u.norm()).abs() / u.norm();
        assert!(rel < 1e-6, "relative energy drift {rel}");
        assert!((&out - &u).norm() > 1e-4);
    }

    #[test]
    fn field_stays_mean_zero() {
        let m = model(8);
        let u = DVector::from_fn(16, |i, _| 0.05 * ((i * 7 % 5) as f64 - 2.0));
        let out = m.solve(&u).unwrap();
        // the trapezoidal rule on 64 points is exact for wavenumbers below 64
        let mean: f64 = (0..64).map(|i| m.evaluate(&out, i as f64 / 64.0)).sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn blow_up_is_reported() {
        let mut m = model(4);
        m.forcing = vec![1e9; 8];
        m.t_obs = 1.0;
        assert!(matches!(m.solve(&DVector::zeros(8)), Err(Error::Divergence { .. })));
    }

    #[test]
    fn map_descends_from_prior_mean() {
        let m = SpectralGalerkinBurgers::new(4, 0.05, 0.01, 1e-3, vec![0.2, 0.5, 0.8]).unwrap();
        let factor = prior_factor(&m, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = DVector::from_fn(3, |_, _| 0.02 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let om = OMFunctional::new(
            Arc::new(BurgersForward(m.clone())),
            y,
            &(DMatrix::identity(3, 3) * 1e-4),
            DVector::zeros(8),
            &factor,
        )
        .unwrap();
        let m0 = DVector::zeros(8);
        let min = om_minimize(&om, &m0, &MinimizeOptions { tol: 1e-7, ..Default::default() }).unwrap();
        assert!(om_eval(&om, &min.u).unwrap() < om_eval(&om, &m0).unwrap());
    }

    #[test]
    fn fd_gradient_matches_central_differences() {
        let m = model(6);
        let factor = prior_factor(&m, 2);
        let y = DVector::from_vec(vec![0.01, -0.02, 0.03, 0.0]);
        let om = OMFunctional::new(
            Arc::new(BurgersForward(m.clone())),
            y,
            &(DMatrix::identity(4, 4) * 1e-4),
            DVector::zeros(12),
            &factor,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let w = DVector::from_fn(12, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let (_, g) = om.eval_whitened(&w).unwrap();
            let central = DVector::from_fn(12, |i, _| {
                let e = 1e-5;
                let mut wp = w.clone();
                wp[i] += e;
                let mut wm = w.clone();
                wm[i] -= e;
                (om.eval_whitened(&wp).unwrap().0 - om.eval_whitened(&wm).unwrap().0) / (2.0 * e)
            });
            assert!((&g - &central).norm() <= 1e-4 * central.norm().max(1.0));
        }
    }
}
