//! Unrolled proximal gradient reconstruction and Monte-Carlo posterior
//! statistics.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain, Image};
use crate::gaussian::WeightDistribution;
use crate::kspace::{rss, unitary_dft, zero_fill_adjoint, Direction, SamplingMask};
use crate::prox::prox_data_fidelity;
use crate::regularizer::Regularizer;
use crate::tdv::TdvParams;

fn step_size(t: f64, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::invalid("number of unrolled steps must be at least 1"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Numerical(format!("step scale T = {t} must be finite and nonnegative")));
    }
    Ok(t / steps as f64)
}

/// Iterates `x₀ … x_S` of
/// `x_{s+1} = prox_{hD}(x_s − h ∇R(x_s))`, `h = T/S`, `x₀ = F⁻¹ M* z`.
pub fn trajectory(
    z: &ComplexField,
    mask: &SamplingMask,
    reg: &dyn Regularizer,
    t: f64,
    steps: usize,
) -> Result<Vec<ComplexField>> {
    let h = step_size(t, steps)?;
    let mut xs = Vec::with_capacity(steps + 1);
    xs.push(zero_fill_adjoint(z, mask)?);
    for s in 0..steps {
        let mut x = xs[s].clone();
        x.axpy(-h, &reg.grad(&xs[s])?);
        let next = prox_data_fidelity(&x, z, mask, h)?;
        if !next.is_finite() {
            return Err(Error::Numerical(format!("non-finite iterate at step {}", s + 1)));
        }
        xs.push(next);
    }
    Ok(xs)
}

/// `x_S` for an arbitrary regularizer and scale `T`.
pub fn reconstruct(
    z: &ComplexField,
    mask: &SamplingMask,
    reg: &dyn Regularizer,
    t: f64,
    steps: usize,
) -> Result<ComplexField> {
    let h = step_size(t, steps)?;
    let mut x = zero_fill_adjoint(z, mask)?;
    for s in 0..steps {
        let mut xb = x.clone();
        xb.axpy(-h, &reg.grad(&x)?);
        x = prox_data_fidelity(&xb, z, mask, h)?;
        if !x.is_finite() {
            return Err(Error::Numerical(format!("non-finite iterate at step {}", s + 1)));
        }
    }
    Ok(x)
}

/// `x_S` with the learned scale `T` taken from the parameters.
pub fn reconstruct_tdv(z: &ComplexField, mask: &SamplingMask, params: &TdvParams, steps: usize) -> Result<ComplexField> {
    reconstruct(z, mask, params, params.scale(), steps)
}

/// Per-frequency magnitude statistics of the sampled reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct KspaceStats {
    pub mean: Image,
    pub std: Image,
}

impl KspaceStats {
    /// `ln(ε + v)` of both maps for display.
    pub fn log_scale(&self, eps: f64) -> (Image, Image) {
        let f = |x: &Image| {
            let d = x.data().iter().map(|v| (eps + v).ln()).collect();
            Image::from_vec_signed(x.width(), x.height(), d).expect("same extent")
        };
        (f(&self.mean), f(&self.std))
    }
}

#[derive(Debug, Clone)]
pub struct ReconStats {
    /// Magnitude images `X_S(z, T, θᵢ)`.
    pub samples: Vec<Image>,
    /// Complex reconstructions `x_S(θᵢ)`.
    pub fields: Vec<ComplexField>,
    pub mean_complex: ComplexField,
    /// Per-pixel `sqrt(mean_i Σ_coils |xᵢ − x̄|²)`.
    pub std_complex: Image,
    pub mean_rss: Image,
    pub std_rss: Image,
    pub kspace: KspaceStats,
}

fn mean_std(images: &[Image]) -> (Image, Image) {
    let n = images.len() as f64;
    let (w, h) = (images[0].width(), images[0].height());
    let mut mean = vec![0.0; w * h];
    for im in images {
        for (m, v) in mean.iter_mut().zip(im.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; w * h];
    for im in images {
        for ((s, v), m) in var.iter_mut().zip(im.data()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt()).collect();
    (
        Image::from_vec_signed(w, h, mean).expect("extent"),
        Image::from_vec(w, h, std).expect("nonnegative"),
    )
}

impl ReconStats {
    pub fn from_fields(fields: Vec<ComplexField>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::invalid("need at least one sample"))?;
        for f in &fields {
            first.check_same_shape(f)?;
            f.require_domain(Domain::Image)?;
        }
        let n = fields.len() as f64;
        let mut mean_complex = ComplexField::zeros(first.width(), first.height(), first.coils(), Domain::Image);
        for f in &fields {
            mean_complex.axpy(1.0, f);
        }
        mean_complex.scale(1.0 / n);
        let q = first.coils();
        let mut var = vec![0.0; first.pixels()];
        for f in &fields {
            for ((s, a), b) in var
                .iter_mut()
                .zip(f.data().chunks_exact(q))
                .zip(mean_complex.data().chunks_exact(q))
            {
                *s += a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>();
            }
        }
        let std_complex = Image::from_vec(first.width(), first.height(), var.iter().map(|s| (s / n).sqrt()).collect())?;
        let samples: Vec<Image> = fields.iter().map(rss).collect();
        let (mean_rss, std_rss) = mean_std(&samples);
        let kmag: Vec<Image> = fields
            .iter()
            .map(|f| unitary_dft(f, Direction::Forward).map(|k| rss(&k)))
            .collect::<Result<_>>()?;
        let (kmean, kstd) = mean_std(&kmag);
        Ok(ReconStats {
            samples,
            fields,
            mean_complex,
            std_complex,
            mean_rss: Image::from_vec(mean_rss.width(), mean_rss.height(), mean_rss.into_data())?,
            std_rss,
            kspace: KspaceStats {
                mean: Image::from_vec(kmean.width(), kmean.height(), kmean.into_data())?,
                std: kstd,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-frequency mean and std of `|F xᵢ|` (root-sum-of-squares over coils).
pub fn kspace_stats(stats: &ReconStats) -> &KspaceStats {
    &stats.kspace
}

/// Draw `N` weight samples, reconstruct with each, and summarize.
///
/// Draws are taken sequentially from `rng`; reconstructions run in parallel
/// and are reduced in draw order, so the result depends only on the seed.
pub fn posterior_sample<R: Rng + ?Sized>(
    z: &ComplexField,
    mask: &SamplingMask,
    dist: &WeightDistribution,
    steps: usize,
    n: usize,
    rng: &mut R,
) -> Result<ReconStats> {
    if n == 0 {
        return Err(Error::invalid("need at least one posterior sample"));
    }
    let draws: Vec<Vec<f64>> = (0..n).map(|_| dist.draw(rng)).collect();
    let t = dist.mu().scale();
    let fields = draws
        .par_iter()
        .map(|zd| reconstruct(z, mask, &dist.params_from_draws(zd), t, steps))
        .collect::<Result<Vec<_>>>()?;
    ReconStats::from_fields(fields)
}
