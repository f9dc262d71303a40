//! Total deep variation regularizer `R(x, θ) = Σ_l (w ψ(K0 x))_l`.
//!
//! Complex input enters as `2Q` real channels (real and imaginary part of
//! every coil). `K0` is a zero-mean convolution with symmetric boundary
//! extension, `ψ` a chain of U-shaped macroblocks built from residual blocks
//! `a + K2 φ(K1 a)`, and `w` a 1×1 projection to one channel.

mod activation;
mod conv;
mod net;
mod params;
mod scalar;

pub use activation::{activation, phi, phi_d1, phi_d2, Order};
pub use conv::{FeatureMap, Kernel, Padding};
pub use params::{
    init_params, project_zero_mean, Layout, Segment, SegmentKind, TdvConfig, TdvParams,
    SCALE_INDEX,
};
pub use scalar::{Dual, Scalar};

use crate::error::Result;
use crate::field::{ComplexField, Domain};

fn to_channels(x: &ComplexField) -> FeatureMap<f64> {
    let (h, w, q) = (x.height(), x.width(), x.coils());
    let mut fm = FeatureMap::zeros(2 * q, h, w);
    let n = h * w;
    for (px, chunk) in x.data().chunks_exact(q).enumerate() {
        for (c, v) in chunk.iter().enumerate() {
            fm.data[2 * c * n + px] = v.re;
            fm.data[(2 * c + 1) * n + px] = v.im;
        }
    }
    fm
}

fn to_dual_channels(x: &ComplexField, v: &ComplexField) -> FeatureMap<Dual> {
    let xv = to_channels(x);
    let vv = to_channels(v);
    FeatureMap {
        channels: xv.channels,
        height: xv.height,
        width: xv.width,
        data: xv.data.iter().zip(&vv.data).map(|(&a, &b)| Dual::new(a, b)).collect(),
    }
}

fn from_channels(fm: &FeatureMap<f64>, q: usize) -> ComplexField {
    let (h, w) = (fm.height, fm.width);
    let n = h * w;
    let mut out = ComplexField::zeros(w, h, q, Domain::Image);
    let data = out.data_mut();
    for px in 0..n {
        for c in 0..q {
            data[px * q + c] = num_complex::Complex64::new(fm.data[2 * c * n + px], fm.data[(2 * c + 1) * n + px]);
        }
    }
    out
}

/// Energy and first derivatives.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub energy: f64,
    pub grad_x: ComplexField,
    /// Gradient over the flat layout (`T` slot is zero).
    pub grad_theta: Vec<f64>,
}

/// Tangent-propagated derivatives along an image-space direction `v`.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    pub energy: f64,
    pub grad_x: ComplexField,
    pub grad_theta: Vec<f64>,
    /// Hessian–vector product `∇ₓ²R · v`.
    pub hvp: ComplexField,
    /// `∂θ ⟨∇ₓR(x, θ), v⟩`.
    pub mixed_theta: Vec<f64>,
}

impl TdvParams {
    fn check_input(&self, x: &ComplexField) -> Result<()> {
        x.require_domain(Domain::Image)?;
        self.config().check_extent(x.height(), x.width(), x.coils())
    }

    pub fn energy(&self, x: &ComplexField) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward(&to_channels(x)).0)
    }

    pub fn gradients(&self, x: &ComplexField) -> Result<Gradients> {
        self.check_input(x)?;
        let (energy, tape) = self.forward(&to_channels(x));
        let back = self.backward(tape, x.height(), x.width(), true);
        Ok(Gradients {
            energy,
            grad_x: from_channels(&back.grad_x, x.coils()),
            grad_theta: back.grad_theta,
        })
    }

    /// `∇ₓR` alone, skipping the parameter gradient.
    pub fn grad_x(&self, x: &ComplexField) -> Result<ComplexField> {
        self.check_input(x)?;
        let (_, tape) = self.forward(&to_channels(x));
        let back = self.backward(tape, x.height(), x.width(), false);
        Ok(from_channels(&back.grad_x, x.coils()))
    }

    /// Forward-mode differentiation of the backward pass along `v`.
    pub fn second_order(&self, x: &ComplexField, v: &ComplexField) -> Result<SecondOrder> {
        self.check_input(x)?;
        x.check_same_shape(v)?;
        let (energy, tape) = self.forward(&to_dual_channels(x, v));
        let back = self.backward(tape, x.height(), x.width(), true);
        let split = |fm: &FeatureMap<Dual>, tangent: bool| FeatureMap {
            channels: fm.channels,
            height: fm.height,
            width: fm.width,
            data: fm.data.iter().map(|d| if tangent { d.d } else { d.v }).collect(),
        };
        Ok(SecondOrder {
            energy: energy.v,
            grad_x: from_channels(&split(&back.grad_x, false), x.coils()),
            hvp: from_channels(&split(&back.grad_x, true), x.coils()),
            grad_theta: back.grad_theta.iter().map(|d| d.v).collect(),
            mixed_theta: back.grad_theta.iter().map(|d| d.d).collect(),
        })
    }
}

/// `R(x, θ)`
pub fn tdv_energy(x: &ComplexField, params: &TdvParams) -> Result<f64> {
    params.energy(x)
}

/// `∇ₓR(x, θ)`
pub fn tdv_grad_x(x: &ComplexField, params: &TdvParams) -> Result<ComplexField> {
    params.grad_x(x)
}
