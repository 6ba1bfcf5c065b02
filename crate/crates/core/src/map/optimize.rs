use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::OMFunctional;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Steepest descent with Armijo backtracking.
    GradientDescent,
    /// Limited-memory BFGS with Armijo backtracking.
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop once the whitened gradient norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            method: Method::Lbfgs,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub u: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const ROUNDOFF: f64 = 1e-10;

/// Minimizes `f` from `u0`. The gradient tolerance applies in whitened coordinates.
///
/// Returns `MaxIterations` with the best iterate when the cap is hit or the
/// line search can make no further progress above the tolerance.
pub fn om_minimize(f: &OMFunctional, u0: &DVector<f64>, opts: &MinimizeOptions) -> Result<Minimum> {
    let mut w = f.to_whitened(u0);
    let (mut value, mut grad) = f.eval_whitened(&w)?;
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut step_hint = 1.0;

    for iter in 0..opts.max_iter {
        let gnorm = grad.norm();
        if gnorm <= opts.tol {
            return Ok(Minimum {
                u: f.from_whitened(&w),
                value,
                grad_norm: gnorm,
                iterations: iter,
            });
        }
        let mut dir = match opts.method {
            Method::GradientDescent => -&grad,
            Method::Lbfgs => two_loop(&grad, &history),
        };
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            history.clear();
            dir = -&grad;
            slope = -gnorm * gnorm;
        }
        let mut t = match opts.method {
            Method::Lbfgs => 1.0,
            Method::GradientDescent => step_hint,
        };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &w + &dir * t;
            let (v, g) = f.eval_whitened(&trial)?;
            let armijo = v <= value + ARMIJO * t * slope;
            // near convergence the decrease drops below roundoff in the value;
            // fall back to the derivative form of the sufficient-decrease test
            let approx_wolfe = v <= value + ROUNDOFF * value.abs() && {
                let d = g.dot(&dir);
                (2.0 * ARMIJO - 1.0) * slope >= d && d >= 0.9 * slope
            };
            if v.is_finite() && (armijo || approx_wolfe) {
                accepted = Some((trial, v, g));
                break;
            }
            t *= 0.5;
        }
        let Some((next, v, g)) = accepted else {
            return Err(Error::MaxIterations {
                iterations: iter,
                grad_norm: gnorm,
                best: Box::new(f.from_whitened(&w)),
            });
        };
        step_hint = (t * 2.0).min(1e6);
        let s = &next - &w;
        let yv = &g - &grad;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            history.push_back((s, yv, 1.0 / sy));
            if history.len() > opts.memory {
                history.pop_front();
            }
        }
        w = next;
        value = v;
        grad = g;
    }
    Err(Error::MaxIterations {
        iterations: opts.max_iter,
        grad_norm: grad.norm(),
        best: Box::new(f.from_whitened(&w)),
    })
}

fn two_loop(grad: &DVector<f64>, history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q -= y * a;
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q += s * (a - b);
    }
    -q
}
