//! Quasi-Newton minimization (BFGS with backtracking Armijo line search)
//! and central finite-difference gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::{HyqError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers `f` by less than `f_tol * max(1, |f|)`
    /// on `stall_iters` consecutive iterations.
    pub f_tol: f64,
    pub stall_iters: usize,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 400, grad_tol: 1e-7, f_tol: 1e-13, stall_iters: 3, max_backtracks: 40 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    /// Objective after each accepted iteration, starting with `f(x0)`.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HyqError::NonFinite(format!("{what} evaluated to {v}")))
    }
}

/// `(f(x + h e_k) - f(x - h e_k)) / 2h` for every coordinate.
pub fn central_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            xp[k] = x[k] + h;
            let fp = f(&xp);
            xp[k] = x[k] - h;
            let fm = f(&xp);
            xp[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Minimizes `f` from `x0`; `grad` returns the gradient at a point.
pub fn bfgs(
    f: &mut dyn FnMut(&[f64]) -> f64,
    grad: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Result<Minimum> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = finite(f(x.as_slice()), "objective")?;
    let mut trace = vec![fx];
    if n == 0 {
        return Ok(Minimum { x: vec![], f: fx, iterations: 0, trace, converged: true });
    }
    let mut g = DVector::from_vec(grad(x.as_slice()));
    if g.iter().any(|v| !v.is_finite()) {
        return Err(HyqError::NonFinite("gradient".into()));
    }
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut stall = 0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        if g.amax() < opts.grad_tol {
            converged = true;
            iterations = it;
            break;
        }
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            // lost descent: restart from steepest descent
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial = &x + &dir * step;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no decrease along a descent direction: at numerical precision
            converged = g.amax() < opts.grad_tol.sqrt();
            break;
        };
        let g_new = DVector::from_vec(grad(x_new.as_slice()));
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(HyqError::NonFinite("gradient".into()));
        }
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            if it == 0 {
                // scale the initial inverse Hessian
                hinv *= sy / y.dot(&y);
            }
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let decrease = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        trace.push(fx);
        if decrease < opts.f_tol * fx.abs().max(1.0) {
            stall += 1;
            if stall >= opts.stall_iters {
                converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    Ok(Minimum { x: x.iter().copied().collect(), f: fx, iterations, trace, converged })
}
