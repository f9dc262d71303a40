//! Block-diagonal Gaussian over the TDV weights.
//!
//! Every stochastic `o × o` kernel slice `u` carries its own lower-triangular
//! factor `L_u` of size `o² × o²`; the weights of that slice are drawn as
//! `θ_u = μ_u + L_u z_u` with `z_u ∼ N(0, Id)`. Different slices are
//! uncorrelated. All remaining coordinates (scale `T`, `K0`, down/up
//! convolutions, output weights) are deterministic and copied from `μ`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tdv::{SegmentKind, TdvParams};

/// Packed lower-triangular matrix, rows stored consecutively.
#[derive(Debug, Clone, PartialEq)]
pub struct TriBlock {
    dim: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_index(a: usize, b: usize) -> usize {
    a * (a + 1) / 2 + b
}

impl TriBlock {
    pub fn zeros(dim: usize) -> Self {
        TriBlock {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut t = TriBlock::zeros(dim);
        for a in 0..dim {
            t.set(a, a, s);
        }
        t
    }

    pub fn from_packed(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * (dim + 1) / 2 {
            return Err(Error::shape(format!(
                "packed triangle of dimension {dim} needs {} entries, got {}",
                dim * (dim + 1) / 2,
                data.len()
            )));
        }
        Ok(TriBlock { dim, data })
    }

    /// Lower triangle of a square matrix; the strict upper part must be zero.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::shape("triangular block must be square"));
        }
        let n = m.nrows();
        let mut t = TriBlock::zeros(n);
        for a in 0..n {
            for b in 0..n {
                if b > a {
                    if m[(a, b)] != 0.0 {
                        return Err(Error::invalid("block is not lower-triangular"));
                    }
                } else {
                    t.set(a, b, m[(a, b)]);
                }
            }
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Entry `(a, b)`; zero above the diagonal.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        if b > a {
            0.0
        } else {
            self.data[packed_index(a, b)]
        }
    }

    pub fn set(&mut self, a: usize, b: usize, v: f64) {
        assert!(b <= a, "write above the diagonal");
        self.data[packed_index(a, b)] = v;
    }

    pub fn diag(&self, a: usize) -> f64 {
        self.data[packed_index(a, a)]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.get(a, b))
    }

    /// `Σ = L Lᵀ`
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.to_dense();
        &l * l.transpose()
    }

    /// `out = L z`
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        for a in 0..self.dim {
            let row = &self.data[packed_index(a, 0)..=packed_index(a, a)];
            out[a] = row.iter().zip(z).map(|(l, v)| l * v).sum();
        }
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn min_abs_diag(&self) -> f64 {
        (0..self.dim).map(|a| self.diag(a).abs()).fold(f64::INFINITY, f64::min)
    }

    /// `Σ_a log|L_aa|`, i.e. `½ log det Σ`.
    pub fn log_abs_det(&self) -> f64 {
        (0..self.dim).map(|a| self.diag(a).abs().ln()).sum()
    }

    /// Accumulate `tril(g zᵀ)`.
    pub fn add_outer_lower(&mut self, g: &[f64], z: &[f64]) {
        for a in 0..self.dim {
            for b in 0..=a {
                self.data[packed_index(a, b)] += g[a] * z[b];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightDistribution {
    mu: TdvParams,
    blocks: Vec<TriBlock>,
    alpha: f64,
    block_map: Vec<Range<usize>>,
}

impl WeightDistribution {
    pub fn new(mu: TdvParams, blocks: Vec<TriBlock>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha must be positive"));
        }
        let block_map = mu.layout().stochastic_slices();
        if blocks.len() != block_map.len() {
            return Err(Error::shape(format!(
                "layout has {} stochastic slices, got {} blocks",
                block_map.len(),
                blocks.len()
            )));
        }
        for (u, (b, r)) in blocks.iter().zip(&block_map).enumerate() {
            if b.dim() != r.len() {
                return Err(Error::shape(format!("block {u} has dimension {}, slice has {}", b.dim(), r.len())));
            }
            if b.packed().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("block {u} is not finite")));
            }
            if b.min_abs_diag() == 0.0 {
                return Err(Error::Numerical(format!("block {u} has a zero diagonal entry")));
            }
        }
        Ok(WeightDistribution {
            mu,
            blocks,
            alpha,
            block_map,
        })
    }

    /// `L_u = l0 · Id` for every block.
    pub fn from_mean(mu: TdvParams, l0: f64, alpha: f64) -> Result<Self> {
        let blocks = mu
            .layout()
            .stochastic_slices()
            .iter()
            .map(|r| TriBlock::scaled_identity(r.len(), l0))
            .collect();
        WeightDistribution::new(mu, blocks, alpha)
    }

    pub fn mu(&self) -> &TdvParams {
        &self.mu
    }

    pub fn mu_mut(&mut self) -> &mut TdvParams {
        &mut self.mu
    }

    pub fn blocks(&self) -> &[TriBlock] {
        &self.blocks
    }

    /// Mutable access; callers must keep the diagonal nonzero.
    pub fn blocks_mut(&mut self) -> &mut [TriBlock] {
        &mut self.blocks
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn block_map(&self) -> &[Range<usize>] {
        &self.block_map
    }

    /// Total number of standard normal draws per sample.
    pub fn draw_len(&self) -> usize {
        self.block_map.iter().map(|r| r.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        WeightDistribution::new(self.mu.clone(), self.blocks.clone(), self.alpha).map(|_| ())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.draw_len()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// `θ = μ + L z` for a given concatenation of per-block draws.
    pub fn params_from_draws(&self, z: &[f64]) -> TdvParams {
        assert_eq!(z.len(), self.draw_len(), "draw length");
        let mut theta = self.mu.clone();
        let flat = theta.flat_mut();
        let mut off = 0;
        let mut buf = Vec::new();
        for (b, r) in self.blocks.iter().zip(&self.block_map) {
            let d = r.len();
            buf.resize(d, 0.0);
            b.mul_vec(&z[off..off + d], &mut buf);
            for (t, v) in flat[r.clone()].iter_mut().zip(&buf) {
                *t += v;
            }
            off += d;
        }
        theta
    }

    pub fn sample_with_draws<R: Rng + ?Sized>(&self, rng: &mut R) -> (TdvParams, Vec<f64>) {
        let z = self.draw(rng);
        (self.params_from_draws(&z), z)
    }

    /// Gradients of `E[J(μ + Lz)]` for one draw: `∂μ = g`,
    /// `∂L_u = tril(g_u z_uᵀ)`.
    pub fn reparam_gradients(&self, g_theta: &[f64], z: &[f64]) -> Vec<TriBlock> {
        let mut off = 0;
        self.blocks
            .iter()
            .zip(&self.block_map)
            .map(|(b, r)| {
                let mut gl = TriBlock::zeros(b.dim());
                gl.add_outer_lower(&g_theta[r.clone()], &z[off..off + r.len()]);
                off += r.len();
                gl
            })
            .collect()
    }

    /// Covariance averaged over the slices of every stochastic segment.
    pub fn segment_covariances(&self) -> Vec<(SegmentKind, DMatrix<f64>)> {
        let mut out = Vec::new();
        for seg in self.mu.layout().segments.iter().filter(|s| s.kind.is_stochastic()) {
            let mut acc = DMatrix::zeros(seg.size * seg.size, seg.size * seg.size);
            let mut count = 0;
            for (b, r) in self.blocks.iter().zip(&self.block_map) {
                if seg.range().contains(&r.start) {
                    acc += b.covariance();
                    count += 1;
                }
            }
            out.push((seg.kind, acc / count as f64));
        }
        out
    }
}

pub fn sample_params<R: Rng + ?Sized>(dist: &WeightDistribution, rng: &mut R) -> TdvParams {
    dist.sample_with_draws(rng).0
}

/// `KL(N(μ₁, Σ₁) ‖ N(μ₂, Σ₂))`
pub fn kl_gaussian(mu1: &DVector<f64>, sigma1: &DMatrix<f64>, mu2: &DVector<f64>, sigma2: &DMatrix<f64>) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || sigma1.shape() != (d, d) || sigma2.shape() != (d, d) {
        return Err(Error::shape("KL operands disagree in dimension"));
    }
    let c1 = cholesky(sigma1)?;
    let c2 = cholesky(sigma2)?;
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = c2.solve(sigma1).trace();
    let dm = mu2 - mu1;
    let maha = dm.dot(&c2.solve(&dm));
    let kl = 0.5 * (logdet(&c2) - logdet(&c1) + trace + maha - d as f64);
    Ok(kl.max(0.0))
}

fn cholesky(s: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let asym = (s - s.transpose()).amax();
    if asym > 1e-10 * s.amax().max(1.0) {
        return Err(Error::invalid("covariance is not symmetric"));
    }
    s.clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))
}

/// `β(α‖L‖²_F − 2 Σ_a log|L_aa|)` for one block.
pub fn block_penalty(l: &TriBlock, alpha: f64, beta: f64) -> Result<f64> {
    if l.min_abs_diag() == 0.0 {
        return Err(Error::Numerical("zero diagonal in covariance factor".into()));
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    Ok(beta * (alpha * l.frobenius_sqr() - 2.0 * l.log_abs_det()))
}

/// `f(L) = Σ_u β(α‖L_u‖²_F − log det(L_u L_uᵀ))`
pub fn kl_penalty(dist: &WeightDistribution, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::invalid("beta must be nonnegative"));
    }
    dist.blocks()
        .iter()
        .map(|b| block_penalty(b, dist.alpha(), beta))
        .sum()
}

/// `(1 / 2N_K) Σ_u ln(2π det Σ_u)`
pub fn mean_entropy(dist: &WeightDistribution) -> f64 {
    mean_entropy_of(dist.blocks())
}

pub fn mean_entropy_of(blocks: &[TriBlock]) -> f64 {
    let n = blocks.len() as f64;
    blocks
        .iter()
        .map(|b| (2.0 * std::f64::consts::PI).ln() + 2.0 * b.log_abs_det())
        .sum::<f64>()
        / (2.0 * n)
}
