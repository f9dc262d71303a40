//! Loss of the `S`-step unrolled reconstruction and its exact gradient with
//! respect to the scale `T` and the network weights.
//!
//! With `h = T/S`, `x̄_s = x_s − h∇R(x_s)` and
//! `x_{s+1} = F⁻¹(D F x̄_s + h/(1+h) M* z)`, where `D` is `1/(1+h)` on
//! acquired rows and `1` elsewhere, the adjoint sweep runs
//!
//! ```text
//! μ_s      = F⁻¹ D F λ_{s+1}
//! ∂J/∂h   += ⟨F λ_{s+1}, M(z − F x̄_s)⟩ / (1+h)²  −  ⟨∇R(x_s), μ_s⟩
//! ∂J/∂θ   −= h ∂θ⟨∇R(x_s), μ_s⟩
//! λ_s      = μ_s − h ∇²R(x_s) μ_s
//! ```
//!
//! starting from `λ_S = ∂J/∂x_S`. The Hessian–vector product and the mixed
//! derivative come from one tangent-mode pass through the network backward.

use crate::error::{Error, Result};
use crate::field::{ComplexField, Image};
use crate::kspace::{rss, unitary_dft, Direction, SamplingMask};
use crate::recon::trajectory;
use crate::tdv::{TdvParams, SCALE_INDEX};

use super::loss::{loss_j, loss_j_grad, rss_backward};

pub fn unrolled_loss(
    params: &TdvParams,
    z: &ComplexField,
    mask: &SamplingMask,
    target: &Image,
    steps: usize,
    tau: f64,
) -> Result<f64> {
    let xs = trajectory(z, mask, params, params.scale(), steps)?;
    loss_j(target, &rss(&xs[steps]), tau)
}

/// `F⁻¹ D F v`, the linear part of the data prox (self-adjoint).
fn prox_linear(v: &ComplexField, mask: &SamplingMask, h: f64) -> Result<ComplexField> {
    let mut k = unitary_dft(v, Direction::Forward)?;
    let row_len = k.width() * k.coils();
    let inv = 1.0 / (1.0 + h);
    for (row, chunk) in k.data_mut().chunks_exact_mut(row_len).enumerate() {
        if mask.is_acquired(row) {
            chunk.iter_mut().for_each(|c| *c *= inv);
        }
    }
    unitary_dft(&k, Direction::Inverse)
}

/// `Re⟨F λ, M(z − F x̄)⟩ / (1+h)²`
fn prox_step_sensitivity(
    lambda: &ComplexField,
    x_bar: &ComplexField,
    z: &ComplexField,
    mask: &SamplingMask,
    h: f64,
) -> Result<f64> {
    let fl = unitary_dft(lambda, Direction::Forward)?;
    let fx = unitary_dft(x_bar, Direction::Forward)?;
    let row_len = fl.width() * fl.coils();
    let mut acc = 0.0;
    for row in (0..fl.height()).filter(|&r| mask.is_acquired(r)) {
        let span = row * row_len..(row + 1) * row_len;
        for ((a, b), c) in fl.data()[span.clone()].iter().zip(&fx.data()[span.clone()]).zip(&z.data()[span]) {
            let d = c - b;
            acc += a.re * d.re + a.im * d.im;
        }
    }
    Ok(acc / ((1.0 + h) * (1.0 + h)))
}

/// Training loss of one sample and its gradient over the flat parameter
/// layout (`T` at index 0).
pub fn unrolled_gradient(
    params: &TdvParams,
    z: &ComplexField,
    mask: &SamplingMask,
    target: &Image,
    steps: usize,
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let t = params.scale();
    let xs = trajectory(z, mask, params, t, steps)?;
    let h = t / steps as f64;
    let (loss, g_rss) = loss_j_grad(target, &rss(&xs[steps]), tau)?;
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite training loss".into()));
    }
    let mut lambda = rss_backward(&xs[steps], &g_rss);
    let mut grad = vec![0.0; params.len()];
    let mut dh = 0.0;
    for s in (0..steps).rev() {
        let mu = prox_linear(&lambda, mask, h)?;
        let so = params.second_order(&xs[s], &mu)?;
        let mut x_bar = xs[s].clone();
        x_bar.axpy(-h, &so.grad_x);
        dh += prox_step_sensitivity(&lambda, &x_bar, z, mask, h)?;
        dh -= so.grad_x.dot(&mu);
        for (g, m) in grad.iter_mut().zip(&so.mixed_theta) {
            *g -= h * m;
        }
        if s > 0 {
            lambda = mu;
            lambda.axpy(-h, &so.hvp);
        }
    }
    grad[SCALE_INDEX] = dh / steps as f64;
    Ok((loss, grad))
}
