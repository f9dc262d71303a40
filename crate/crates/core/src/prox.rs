//! Proximal maps of the data term and of the covariance penalty, and a
//! generic numerical prox used to cross-check both.

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain};
use crate::gaussian::TriBlock;
use crate::kspace::{unitary_dft, Direction, SamplingMask};

/// `argmin_x ½‖x − x̄‖² + (h/2)‖M F x − z‖²`.
///
/// In k-space acquired entries become `(F x̄ + h z) / (1 + h)`; the rest keep
/// `F x̄`. `h = 0` is the identity.
pub fn prox_data_fidelity(x_bar: &ComplexField, z: &ComplexField, mask: &SamplingMask, h: f64) -> Result<ComplexField> {
    x_bar.require_domain(Domain::Image)?;
    z.require_domain(Domain::Kspace)?;
    x_bar.check_same_shape(z)?;
    if mask.lines() != x_bar.height() {
        return Err(Error::shape(format!("mask has {} lines, field has {} rows", mask.lines(), x_bar.height())));
    }
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::invalid("prox step must be finite and nonnegative"));
    }
    if h == 0.0 {
        return Ok(x_bar.clone());
    }
    let mut k = unitary_dft(x_bar, Direction::Forward)?;
    let row_len = k.width() * k.coils();
    let inv = 1.0 / (1.0 + h);
    for (row, (kc, zc)) in k
        .data_mut()
        .chunks_exact_mut(row_len)
        .zip(z.data().chunks_exact(row_len))
        .enumerate()
    {
        if mask.is_acquired(row) {
            for (a, b) in kc.iter_mut().zip(zc) {
                *a = (*a + b * h) * inv;
            }
        }
    }
    unitary_dft(&k, Direction::Inverse)
}

/// Prox of `h·β(α‖l‖²_F − 2 Σ log l_aa)` on one lower-triangular block.
///
/// Entrywise closed form; the diagonal takes the positive root, so the
/// output diagonal is positive for `β > 0` whatever the sign of `l̄_aa`.
pub fn prox_kl_block(l_bar: &TriBlock, h: f64, alpha: f64, beta: f64) -> TriBlock {
    if beta == 0.0 {
        return l_bar.clone();
    }
    let c = 1.0 + 2.0 * alpha * beta * h;
    let mut out = TriBlock::zeros(l_bar.dim());
    for a in 0..l_bar.dim() {
        for b in 0..a {
            out.set(a, b, l_bar.get(a, b) / c);
        }
        let d = l_bar.diag(a);
        out.set(a, a, (d + (d * d + 8.0 * beta * h * c).sqrt()) / (2.0 * c));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct NumericProxOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NumericProxOptions {
    fn default() -> Self {
        NumericProxOptions {
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

/// Minimize `(1/2h)‖x − x̄‖² + f(x)` by gradient descent with
/// Barzilai–Borwein steps and backtracking, starting at `x̄`. `objective`
/// returns `(f(x), ∇f(x))`; non-finite values mark points outside the domain.
pub fn numeric_prox_oracle<F>(objective: F, x_bar: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    numeric_prox_from(objective, x_bar, h, x_bar, NumericProxOptions::default())
}

pub fn numeric_prox_from<F>(objective: F, x_bar: &[f64], h: f64, x0: &[f64], opts: NumericProxOptions) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if !(h > 0.0) {
        return Err(Error::invalid("prox step must be positive"));
    }
    let total = |x: &[f64]| {
        let (f, mut g) = objective(x);
        let mut e = f;
        for ((gi, xi), bi) in g.iter_mut().zip(x).zip(x_bar) {
            e += (xi - bi) * (xi - bi) / (2.0 * h);
            *gi += (xi - bi) / h;
        }
        (e, g)
    };
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = x0.to_vec();
    let (mut e, mut g) = total(&x);
    if !e.is_finite() {
        return Err(Error::invalid("prox objective is not finite at the start point"));
    }
    let mut t = h;
    // Barzilai–Borwein steps with a nonmonotone Armijo test over the last
    // few energies.
    let mut recent = std::collections::VecDeque::from([e]);
    for _ in 0..opts.max_iters {
        let gn = norm(&g);
        if gn < opts.tol {
            return Ok(x);
        }
        let e_ref = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let (et, gt) = total(&trial);
            let finite = et.is_finite() && gt.iter().all(|v| v.is_finite());
            let armijo = et <= e_ref - 1e-4 * t * gn * gn;
            // Near the optimum the decrease drops below rounding; accept
            // steps that keep the energy within rounding and shrink the gradient.
            let flat = et <= e + 8.0 * f64::EPSILON * e.abs().max(1.0) && norm(&gt) < gn;
            if finite && (armijo || flat) {
                let (mut ss, mut sy) = (0.0, 0.0);
                for (((xn, xo), gn_), go) in trial.iter().zip(&x).zip(&gt).zip(&g) {
                    let (si, yi) = (xn - xo, gn_ - go);
                    ss += si * si;
                    sy += si * yi;
                }
                t = if sy > 0.0 { ss / sy } else { 2.0 * t };
                x = trial;
                e = et;
                g = gt;
                recent.push_back(e);
                if recent.len() > 10 {
                    recent.pop_front();
                }
                break;
            }
            t *= 0.5;
            if t < 1e-300 {
                return Err(Error::NotConverged {
                    iterations: 0,
                    grad_norm: gn,
                });
            }
        }
    }
    let gn = norm(&g);
    if gn < opts.tol {
        Ok(x)
    } else {
        Err(Error::NotConverged {
            iterations: opts.max_iters,
            grad_norm: gn,
        })
    }
}
