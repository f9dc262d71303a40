use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization protocol shared by the deterministic and stochastic
/// trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// SSIM weight in the training loss.
    pub tau: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_halving_interval: usize,
    pub moment_reset_interval: usize,
    pub total_iterations: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub curriculum_start_s: usize,
    pub curriculum_increment_interval: usize,
    pub final_s: usize,
    /// Patch extent along the readout (column) direction.
    pub patch_width: usize,
    /// Patch extent along the phase-encoding (row) direction.
    pub patch_height: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Initial diagonal of every covariance factor.
    pub l0: f64,
    pub mc_samples_per_step: usize,
    pub acceleration: usize,
    /// Calibration fraction; `None` picks the default for `acceleration`.
    pub acs_fraction: Option<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            tau: 1.0,
            batch_size: 4,
            lr: 1e-3,
            lr_halving_interval: 1000,
            moment_reset_interval: 1000,
            total_iterations: 2000,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            curriculum_start_s: 2,
            curriculum_increment_interval: 250,
            final_s: 5,
            patch_width: 32,
            patch_height: 64,
            alpha: 10.0,
            beta: 1e-4,
            l0: 1e-3f64.sqrt(),
            mc_samples_per_step: 1,
            acceleration: 4,
            acs_fraction: None,
            noise_sigma: 0.01,
            seed: 0,
        }
    }

    /// Single-coil protocol at full scale.
    pub fn full() -> Self {
        TrainConfig {
            batch_size: 8,
            lr: 1e-4,
            lr_halving_interval: 50_000,
            moment_reset_interval: 50_000,
            total_iterations: 120_000,
            curriculum_increment_interval: 7_500,
            final_s: 15,
            patch_width: 96,
            patch_height: 368,
            ..TrainConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("lr_halving_interval", self.lr_halving_interval),
            ("moment_reset_interval", self.moment_reset_interval),
            ("curriculum_start_s", self.curriculum_start_s),
            ("curriculum_increment_interval", self.curriculum_increment_interval),
            ("final_s", self.final_s),
            ("patch_width", self.patch_width),
            ("patch_height", self.patch_height),
            ("mc_samples_per_step", self.mc_samples_per_step),
            ("acceleration", self.acceleration),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.curriculum_start_s > self.final_s {
            return Err(Error::Config("curriculum_start_s exceeds final_s".into()));
        }
        let finite_nonneg = [
            ("tau", self.tau),
            ("lr", self.lr),
            ("beta", self.beta),
            ("noise_sigma", self.noise_sigma),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in finite_nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.l0 > 0.0 && self.l0.is_finite()) {
            return Err(Error::Config("alpha and l0 must be positive".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if let Some(f) = self.acs_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config("acs_fraction must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Unrolled steps at an iteration: start at `curriculum_start_s`, add one
    /// every `curriculum_increment_interval` iterations, cap at `final_s`.
    pub fn steps_at(&self, iteration: usize) -> usize {
        (self.curriculum_start_s + iteration / self.curriculum_increment_interval).min(self.final_s)
    }

    /// Learning rate halved every `lr_halving_interval` iterations.
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let halvings = (iteration / self.lr_halving_interval).min(1000) as i32;
        self.lr * 0.5f64.powi(halvings)
    }

    pub fn resets_moments_at(&self, iteration: usize) -> bool {
        iteration > 0 && iteration % self.moment_reset_interval == 0
    }

    pub fn acs(&self) -> f64 {
        self.acs_fraction
            .unwrap_or_else(|| crate::kspace::default_acs_fraction(self.acceleration))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let c = TrainConfig::desk();
        assert_eq!(c.steps_at(0), 2);
        assert_eq!(c.steps_at(249), 2);
        assert_eq!(c.steps_at(250), 3);
        assert_eq!(c.steps_at(1999), 5);
        assert_eq!(c.lr_at(999), 1e-3);
        assert_eq!(c.lr_at(1000), 5e-4);
        assert!(!c.resets_moments_at(0) && c.resets_moments_at(1000));
        let p = TrainConfig::full();
        assert_eq!(p.steps_at(7_500 * 20), 15);
        c.validate().unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut v = serde_json::to_value(TrainConfig::desk()).unwrap();
        v["bogus"] = 1.into();
        assert!(serde_json::from_value::<TrainConfig>(v).is_err());
        let c = TrainConfig {
            curriculum_start_s: 9,
            ..TrainConfig::desk()
        };
        assert!(c.validate().is_err());
    }
}
