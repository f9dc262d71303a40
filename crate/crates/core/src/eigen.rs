//! Nonlinear eigenfunctions of a regularizer: images `v` with
//! `∇R(v) = Λ(v) v`, found by minimizing the residual
//! `E(v) = ½‖∇R(v) − Λ(v) v‖²` over the sphere of radius `‖v₀‖`.
//!
//! With `r = ∇R(v) − Λ(v) v` one has `⟨r, v⟩ = 0`, so the derivative of
//! `Λ` drops out and `∇E(v) = ∇²R(v) r − Λ(v) r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::regularizer::Regularizer;

/// Consecutive growth iterations that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 100;

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub v: ComplexField,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Best residual after each iteration, starting with the initial one.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Initial step; adapted by backtracking.
    pub step: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            max_iters: 1000,
            tol: 1e-10,
            step: 1.0,
        }
    }
}

fn nonzero(v: &ComplexField) -> Result<f64> {
    let n2 = v.norm_sqr();
    if n2 == 0.0 {
        return Err(Error::invalid("eigenfunction candidate must be nonzero"));
    }
    Ok(n2)
}

/// `Λ(v) = ⟨∇R(v), v⟩ / ‖v‖²`
pub fn rayleigh(v: &ComplexField, reg: &dyn Regularizer) -> Result<f64> {
    let n2 = nonzero(v)?;
    Ok(reg.grad(v)?.dot(v) / n2)
}

fn residual_vector(v: &ComplexField, reg: &dyn Regularizer) -> Result<(f64, ComplexField)> {
    let n2 = nonzero(v)?;
    let mut r = reg.grad(v)?;
    let lambda = r.dot(v) / n2;
    r.axpy(-lambda, v);
    Ok((lambda, r))
}

/// `½‖∇R(v) − Λ(v) v‖²`
pub fn eigen_objective(v: &ComplexField, reg: &dyn Regularizer) -> Result<f64> {
    let (_, r) = residual_vector(v, reg)?;
    Ok(0.5 * r.norm_sqr())
}

/// Objective value, its gradient and `Λ(v)`.
pub fn eigen_objective_grad(v: &ComplexField, reg: &dyn Regularizer) -> Result<(f64, ComplexField, f64)> {
    let (lambda, r) = residual_vector(v, reg)?;
    let mut g = reg.hvp(v, &r)?;
    g.axpy(-lambda, &r);
    Ok((0.5 * r.norm_sqr(), g, lambda))
}

fn project(v: &mut ComplexField, radius: f64) {
    let n = v.norm();
    if n > 0.0 {
        v.scale(radius / n);
    }
}

/// Accelerated projected gradient descent with backtracking and
/// function-value restarts; returns the best iterate.
pub fn find_eigenfunction(v0: &ComplexField, reg: &dyn Regularizer, opts: EigenOptions) -> Result<EigenResult> {
    if !(opts.tol >= 0.0 && opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::invalid("eigen search needs tol ≥ 0 and a positive finite step"));
    }
    let radius = nonzero(v0)?.sqrt();
    let mut x = v0.clone();
    project(&mut x, radius);
    let mut fx = eigen_objective(&x, reg)?;
    let mut best = (x.clone(), fx);
    let mut history = vec![fx];
    let mut x_prev = x.clone();
    let mut momentum = 0.0_f64;
    let mut step = opts.step;
    let mut growth = 0;
    let mut iterations = 0;

    while best.1 >= opts.tol && iterations < opts.max_iters {
        iterations += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = if momentum > 0.0 { (momentum - 1.0) / t_next } else { 0.0 };
        let mut y = x.clone();
        y.scale(1.0 + beta);
        y.axpy(-beta, &x_prev);
        project(&mut y, radius);
        let (fy, gy, _) = eigen_objective_grad(&y, reg)?;
        if !fy.is_finite() {
            return Err(Error::Numerical(format!("non-finite eigen residual at iteration {iterations}")));
        }

        // Backtrack until the projected step satisfies the quadratic upper bound.
        let (candidate, fc) = loop {
            let mut c = y.clone();
            c.axpy(-step, &gy);
            project(&mut c, radius);
            let fc = eigen_objective(&c, reg)?;
            let mut d = c.clone();
            d.axpy(-1.0, &y);
            let bound = fy + gy.dot(&d) + d.norm_sqr() / (2.0 * step);
            if fc <= bound + 1e-15 * fy.abs() || step < 1e-300 {
                break (c, fc);
            }
            step *= 0.5;
        };

        if fc > fx {
            // Restart: drop momentum and retry from x next iteration.
            momentum = 0.0;
            x_prev = x.clone();
            growth += 1;
        } else {
            x_prev = std::mem::replace(&mut x, candidate);
            fx = fc;
            momentum = t_next;
            growth = 0;
        }
        step *= 1.1;
        if fx < best.1 {
            best = (x.clone(), fx);
        }
        history.push(best.1);
        if growth >= DIVERGENCE_WINDOW {
            return Err(Error::EigenDiverged {
                iterations,
                residual: fx,
            });
        }
    }

    let (v, residual) = best;
    let lambda = rayleigh(&v, reg)?;
    if !lambda.is_finite() {
        return Err(Error::Numerical("non-finite generalized eigenvalue".into()));
    }
    Ok(EigenResult {
        v,
        lambda,
        residual,
        iterations,
        history,
    })
}
