use num_complex::Complex64;

use crate::error::Result;
use crate::field::{ComplexField, Image};
use crate::metrics::{ssim, ssim_grad};

/// `J = ‖X − Y‖₁ + τ(1 − SSIM(X, Y))`
pub fn loss_j(target: &Image, recon: &Image, tau: f64) -> Result<f64> {
    target.check_same_shape(recon)?;
    let l1: f64 = recon.data().iter().zip(target.data()).map(|(x, y)| (x - y).abs()).sum();
    if tau == 0.0 {
        return Ok(l1);
    }
    Ok(l1 + tau * (1.0 - ssim(recon, target)?))
}

/// `J` and `∂J/∂X`. The subgradient of `|·|` at zero is taken as zero.
pub fn loss_j_grad(target: &Image, recon: &Image, tau: f64) -> Result<(f64, Vec<f64>)> {
    target.check_same_shape(recon)?;
    let mut l1 = 0.0;
    let mut g: Vec<f64> = recon
        .data()
        .iter()
        .zip(target.data())
        .map(|(x, y)| {
            l1 += (x - y).abs();
            if x > y {
                1.0
            } else if x < y {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    if tau == 0.0 {
        return Ok((l1, g));
    }
    let (s, gs) = ssim_grad(recon, target)?;
    for (gi, si) in g.iter_mut().zip(&gs) {
        *gi -= tau * si;
    }
    Ok((l1 + tau * (1.0 - s), g))
}

/// Pull `∂J/∂X` back through `X = rss(x)`: `∂J/∂x_q = ∂J/∂X · x_q / X`,
/// zero where `X = 0`.
pub fn rss_backward(x: &ComplexField, grad_rss: &[f64]) -> ComplexField {
    let q = x.coils();
    let mut out = x.clone();
    for (px, g) in out.data_mut().chunks_exact_mut(q).zip(grad_rss) {
        let mag = px.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if mag == 0.0 {
            px.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        } else {
            let f = g / mag;
            px.iter_mut().for_each(|c| *c *= f);
        }
    }
    out
}
