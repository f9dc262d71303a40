use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use utdv_core::tdv::TdvConfig;
use utdv_core::train::TrainConfig;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskParams {
    pub acceleration: usize,
    /// `null` selects the default calibration fraction for the acceleration.
    pub acs_fraction: Option<f64>,
}

/// Everything a training run depends on. Written next to every trained
/// model so the run can be repeated with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub net: TdvConfig,
    pub train: TrainConfig,
    pub mask: MaskParams,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Initial mean for stochastic training.
    pub init: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn defaults(desk: bool, coils: usize) -> Self {
        let (net, train) = if desk {
            (TdvConfig::desk(coils), TrainConfig::desk())
        } else {
            (TdvConfig::full(coils), TrainConfig::full())
        };
        RunConfig {
            net,
            mask: MaskParams {
                acceleration: train.acceleration,
                acs_fraction: train.acs_fraction,
            },
            seed: train.seed,
            train,
            data: None,
            out: None,
            init: None,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Mask and seed fields are authoritative; they are copied into the
    /// training protocol before validation.
    pub fn resolved_train(&self) -> TrainConfig {
        TrainConfig {
            acceleration: self.mask.acceleration,
            acs_fraction: self.mask.acs_fraction,
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.net.validate()?;
        self.resolved_train().validate()?;
        Ok(())
    }
}
