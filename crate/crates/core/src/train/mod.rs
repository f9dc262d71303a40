//! Sampled optimal control training of the TDV reconstruction, in the
//! deterministic regime (point estimate of the weights) and the stochastic
//! regime (block Gaussian over the weights).

mod adam;
mod checkpoint;
mod config;
mod data;
mod loss;
mod unroll;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointKind, RngState};
pub use config::TrainConfig;
pub use data::{extract_patch, measure, sample_batch, sample_patch, Sample};
pub use loss::{loss_j, loss_j_grad, rss_backward};
pub use unroll::{unrolled_gradient, unrolled_loss};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::gaussian::{mean_entropy, TriBlock, WeightDistribution};
use crate::prox::prox_kl_block;
use crate::tdv::{TdvParams, SCALE_INDEX};

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub loss: f64,
    /// Mean entropy of the weight distribution; `None` when deterministic.
    pub entropy: Option<f64>,
    pub lr: f64,
    pub steps: usize,
}

pub fn log_csv(rows: &[StepReport]) -> String {
    let mut s = String::from("iteration,loss,entropy,lr,S\n");
    for r in rows {
        let entropy = r.entropy.map_or(String::new(), |e| e.to_string());
        s.push_str(&format!("{},{},{},{},{}\n", r.iteration, r.loss, entropy, r.lr, r.steps));
    }
    s
}

/// Data stream 0 feeds patches, masks and noise; stream 1 feeds weight draws.
fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(0);
    r
}

fn draw_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

/// Mean loss and mean gradient over a batch; per-sample work runs in
/// parallel and is summed in batch order.
fn batch_gradient(params: &TdvParams, batch: &[Sample], steps: usize, tau: f64) -> Result<(f64, Vec<f64>)> {
    let parts = batch
        .par_iter()
        .map(|s| unrolled_gradient(params, &s.z, &s.mask, &s.target, steps, tau))
        .collect::<Vec<_>>();
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

fn param_norm(flat: &[f64]) -> f64 {
    flat.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diverged(iteration: usize, loss: f64, flat: &[f64]) -> Error {
    Error::Diverged {
        iteration,
        loss,
        param_norm: param_norm(flat),
    }
}

fn check_dataset(images: &[ComplexField], params: &TdvParams, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for y in images {
        let (ph, pw) = (cfg.patch_height.min(y.height()), cfg.patch_width.min(y.width()));
        params.config().check_extent(ph, pw, y.coils())?;
    }
    Ok(())
}

/// The step scale must stay nonnegative for the data prox.
fn clamp_scale(flat: &mut [f64]) {
    if flat[SCALE_INDEX] < 0.0 {
        flat[SCALE_INDEX] = 0.0;
    }
}

/// ADAM on `(T, θ)` for the deterministic problem.
pub struct DeterministicTrainer {
    config: TrainConfig,
    images: Vec<ComplexField>,
    params: TdvParams,
    adam: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl DeterministicTrainer {
    pub fn new(images: Vec<ComplexField>, params: TdvParams, config: TrainConfig) -> Result<Self> {
        check_dataset(&images, &params, &config)?;
        let adam = Adam::new(params.len(), config.adam_beta1, config.adam_beta2, config.adam_eps);
        let rng = data_rng(config.seed);
        Ok(DeterministicTrainer {
            config,
            images,
            params,
            adam,
            rng,
            iteration: 0,
        })
    }

    pub fn params(&self) -> &TdvParams {
        &self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.total_iterations
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let it = self.iteration;
        if self.config.resets_moments_at(it) {
            self.adam.reset();
        }
        let steps = self.config.steps_at(it);
        let lr = self.config.lr_at(it);
        let batch = sample_batch(&self.images, &self.config, &mut self.rng)?;
        let (loss, grad) = batch_gradient(&self.params, &batch, steps, self.config.tau)
            .map_err(|e| match e {
                Error::Numerical(_) => diverged(it, f64::NAN, self.params.flat()),
                e => e,
            })?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged(it, loss, self.params.flat()));
        }
        self.adam.step(self.params.flat_mut(), &grad, lr);
        clamp_scale(self.params.flat_mut());
        self.iteration += 1;
        Ok(StepReport {
            iteration: it,
            loss,
            entropy: None,
            lr,
            steps,
        })
    }

    /// Run until `total_iterations`, calling `on_step` after every update.
    pub fn run(&mut self, mut on_step: impl FnMut(&Self, &StepReport) -> Result<()>) -> Result<Vec<StepReport>> {
        let mut log = Vec::new();
        while !self.is_done() {
            let r = self.step()?;
            on_step(self, &r)?;
            log.push(r);
        }
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: CheckpointKind::Deterministic,
            iteration: self.iteration,
            config: self.config.clone(),
            params: self.params.clone(),
            blocks: Vec::new(),
            alpha: None,
            adam_params: self.adam.clone(),
            adam_blocks: None,
            data_rng: RngState::capture(&self.rng),
            draw_rng: None,
        }
    }

    pub fn resume(images: Vec<ComplexField>, ck: Checkpoint) -> Result<Self> {
        if ck.kind != CheckpointKind::Deterministic {
            return Err(Error::invalid("checkpoint is not deterministic"));
        }
        check_dataset(&images, &ck.params, &ck.config)?;
        Ok(DeterministicTrainer {
            rng: ck.data_rng.restore(),
            config: ck.config,
            images,
            params: ck.params,
            adam: ck.adam_params,
            iteration: ck.iteration,
        })
    }

    /// Continue from `ck` with masks of acceleration `new_r`, keeping the
    /// parameters and iteration count and zeroing the optimizer moments.
    pub fn retrain_warm_start(images: Vec<ComplexField>, ck: Checkpoint, new_r: usize, config: TrainConfig) -> Result<Self> {
        if config_layout_mismatch(&ck.params, &images) {
            return Err(Error::shape("checkpoint layout does not match the data"));
        }
        let mut t = DeterministicTrainer::resume(images, ck)?;
        t.config = TrainConfig {
            acceleration: new_r,
            ..config
        };
        t.config.validate()?;
        t.adam = Adam::new(t.params.len(), t.config.adam_beta1, t.config.adam_beta2, t.config.adam_eps);
        Ok(t)
    }
}

fn config_layout_mismatch(params: &TdvParams, images: &[ComplexField]) -> bool {
    images.iter().any(|y| y.coils() != params.config().coils)
}

/// ADAM on `(T, μ)`; ADAM-preconditioned step plus covariance prox on every
/// block `L_u`.
pub struct StochasticTrainer {
    config: TrainConfig,
    images: Vec<ComplexField>,
    dist: WeightDistribution,
    adam_mu: Adam,
    adam_blocks: Adam,
    data_rng: ChaCha8Rng,
    draw_rng: ChaCha8Rng,
    iteration: usize,
    freeze_blocks: bool,
    zero_draws: bool,
}

fn packed_len(blocks: &[TriBlock]) -> usize {
    blocks.iter().map(|b| b.packed().len()).sum()
}

impl StochasticTrainer {
    /// Start from a mean (e.g. a trained deterministic model) with
    /// `L_u = l0 · Id`.
    pub fn new(images: Vec<ComplexField>, mu: TdvParams, config: TrainConfig) -> Result<Self> {
        let dist = WeightDistribution::from_mean(mu, config.l0, config.alpha)?;
        StochasticTrainer::from_distribution(images, dist, config)
    }

    pub fn from_distribution(images: Vec<ComplexField>, dist: WeightDistribution, config: TrainConfig) -> Result<Self> {
        check_dataset(&images, dist.mu(), &config)?;
        let adam_mu = Adam::new(dist.mu().len(), config.adam_beta1, config.adam_beta2, config.adam_eps);
        let adam_blocks = Adam::new(packed_len(dist.blocks()), config.adam_beta1, config.adam_beta2, config.adam_eps);
        Ok(StochasticTrainer {
            data_rng: data_rng(config.seed),
            draw_rng: draw_rng(config.seed),
            config,
            images,
            dist,
            adam_mu,
            adam_blocks,
            iteration: 0,
            freeze_blocks: false,
            zero_draws: false,
        })
    }

    /// Freeze the covariance factors and replace every normal draw by zero;
    /// with `β = 0` the iterates then follow the deterministic trainer.
    pub fn exact_reduction(mut self) -> Self {
        self.freeze_blocks = true;
        self.zero_draws = true;
        self
    }

    pub fn distribution(&self) -> &WeightDistribution {
        &self.dist
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn adam_mu(&self) -> &Adam {
        &self.adam_mu
    }

    pub fn adam_blocks(&self) -> &Adam {
        &self.adam_blocks
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.total_iterations
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let it = self.iteration;
        if self.config.resets_moments_at(it) {
            self.adam_mu.reset();
            self.adam_blocks.reset();
        }
        let steps = self.config.steps_at(it);
        let lr = self.config.lr_at(it);
        let batch = sample_batch(&self.images, &self.config, &mut self.data_rng)?;
        let mc = self.config.mc_samples_per_step;
        let mut grad_mu = vec![0.0; self.dist.mu().len()];
        let mut grad_l: Vec<TriBlock> = self.dist.blocks().iter().map(|b| TriBlock::zeros(b.dim())).collect();
        let mut loss = 0.0;
        for _ in 0..mc {
            let z = if self.zero_draws {
                vec![0.0; self.dist.draw_len()]
            } else {
                self.dist.draw(&mut self.draw_rng)
            };
            let theta = self.dist.params_from_draws(&z);
            let (l, g) = batch_gradient(&theta, &batch, steps, self.config.tau).map_err(|e| match e {
                Error::Numerical(_) => diverged(it, f64::NAN, self.dist.mu().flat()),
                e => e,
            })?;
            loss += l;
            if mc == 1 {
                grad_mu = g.clone();
            } else {
                for (a, b) in grad_mu.iter_mut().zip(&g) {
                    *a += b / mc as f64;
                }
            }
            if !self.freeze_blocks {
                for (acc, gl) in grad_l.iter_mut().zip(self.dist.reparam_gradients(&g, &z)) {
                    for (a, b) in acc.packed_mut().iter_mut().zip(gl.packed()) {
                        *a += b / mc as f64;
                    }
                }
            }
        }
        let loss = loss / mc as f64;
        if !loss.is_finite() || grad_mu.iter().any(|g| !g.is_finite()) {
            return Err(diverged(it, loss, self.dist.mu().flat()));
        }
        self.adam_mu.step(self.dist.mu_mut().flat_mut(), &grad_mu, lr);
        clamp_scale(self.dist.mu_mut().flat_mut());
        if !self.freeze_blocks {
            let flat_g: Vec<f64> = grad_l.iter().flat_map(|b| b.packed().iter().copied()).collect();
            let (m_hat, v_hat) = self.adam_blocks.moments(&flat_g);
            let (alpha, beta) = (self.dist.alpha(), self.config.beta);
            let mut off = 0;
            for b in self.dist.blocks_mut() {
                let n = b.packed().len();
                let h = self.adam_blocks.scalar_step(&v_hat[off..off + n], lr);
                for (l, m) in b.packed_mut().iter_mut().zip(&m_hat[off..off + n]) {
                    *l -= h * m;
                }
                off += n;
                if h > 0.0 {
                    *b = prox_kl_block(b, h, alpha, beta);
                }
            }
            if let Some(u) = self.dist.blocks().iter().position(|b| b.min_abs_diag() == 0.0) {
                return Err(Error::Numerical(format!("covariance block {u} became singular at iteration {it}")));
            }
        }
        self.iteration += 1;
        Ok(StepReport {
            iteration: it,
            loss,
            entropy: Some(mean_entropy(&self.dist)),
            lr,
            steps,
        })
    }

    pub fn run(&mut self, mut on_step: impl FnMut(&Self, &StepReport) -> Result<()>) -> Result<Vec<StepReport>> {
        let mut log = Vec::new();
        while !self.is_done() {
            let r = self.step()?;
            on_step(self, &r)?;
            log.push(r);
        }
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: CheckpointKind::Stochastic,
            iteration: self.iteration,
            config: self.config.clone(),
            params: self.dist.mu().clone(),
            blocks: self.dist.blocks().to_vec(),
            alpha: Some(self.dist.alpha()),
            adam_params: self.adam_mu.clone(),
            adam_blocks: Some(self.adam_blocks.clone()),
            data_rng: RngState::capture(&self.data_rng),
            draw_rng: Some(RngState::capture(&self.draw_rng)),
        }
    }

    pub fn resume(images: Vec<ComplexField>, ck: Checkpoint) -> Result<Self> {
        let (Some(alpha), Some(adam_blocks), Some(draw)) = (ck.alpha, ck.adam_blocks, ck.draw_rng) else {
            return Err(Error::invalid("checkpoint is not stochastic"));
        };
        let dist = WeightDistribution::new(ck.params, ck.blocks, alpha)?;
        check_dataset(&images, dist.mu(), &ck.config)?;
        Ok(StochasticTrainer {
            config: ck.config,
            images,
            dist,
            adam_mu: ck.adam_params,
            adam_blocks,
            data_rng: ck.data_rng.restore(),
            draw_rng: draw.restore(),
            iteration: ck.iteration,
            freeze_blocks: false,
            zero_draws: false,
        })
    }

    pub fn retrain_warm_start(images: Vec<ComplexField>, ck: Checkpoint, new_r: usize, config: TrainConfig) -> Result<Self> {
        if config_layout_mismatch(&ck.params, &images) {
            return Err(Error::shape("checkpoint layout does not match the data"));
        }
        let mut t = StochasticTrainer::resume(images, ck)?;
        t.config = TrainConfig {
            acceleration: new_r,
            ..config
        };
        t.config.validate()?;
        t.adam_mu.reset();
        t.adam_blocks.reset();
        Ok(t)
    }
}
